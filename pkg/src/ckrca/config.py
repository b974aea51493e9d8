"""Run configuration loaded from YAML or JSON."""

from __future__ import annotations

from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EmbeddingSettings(_Strict):
    provider: Literal["hashing", "external"] = "hashing"
    dim: int = Field(256, ge=1)
    base_url: str | None = None
    timeout: float = Field(10.0, gt=0)
    max_in_flight: int = Field(4, ge=1)

    @model_validator(mode="after")
    def _needs_url(self):
        if self.provider == "external" and not self.base_url:
            raise ValueError("base_url is required for the external provider")
        return self

    def as_provider_config(self) -> dict:
        if self.provider == "hashing":
            return {"kind": "hashing", "dim": self.dim}
        return {"kind": "external", "dim": self.dim, "base_url": self.base_url, "timeout": self.timeout}


class SummarySettings(_Strict):
    provider: Literal["extractive_lead", "external"] = "extractive_lead"
    max_sentences: int = Field(3, ge=1)
    max_tokens: int = Field(128, ge=1)
    base_url: str | None = None
    timeout: float = Field(10.0, gt=0)

    @model_validator(mode="after")
    def _needs_url(self):
        if self.provider == "external" and not self.base_url:
            raise ValueError("base_url is required for the external provider")
        return self

    def as_provider_config(self) -> dict:
        if self.provider == "extractive_lead":
            return {"kind": "extractive_lead", "max_sentences": self.max_sentences, "max_tokens": self.max_tokens}
        return {"kind": "external", "base_url": self.base_url, "timeout": self.timeout}


class Settings(_Strict):
    window_minutes: float = Field(15, gt=0)
    min_fires: int = Field(10, ge=1)
    row_drop_fraction: float = Field(0.95, ge=0, lt=1)
    pre_window_minutes: float = Field(60, ge=0)
    alpha: float = Field(0.05, gt=0, lt=1)
    max_cond: int = Field(3, ge=0)
    k: int = Field(9, ge=1)
    L: int = Field(3, ge=1)
    top_n: int = Field(5, ge=1)
    n_trees: int = Field(50, ge=1)
    max_depth: int = Field(25, ge=0)
    cluster_tolerance: float = Field(0.05, ge=0, lt=1)
    k_max: int = Field(150, ge=2)
    seed: int = 0
    embedding: EmbeddingSettings = Field(default_factory=EmbeddingSettings)
    summary: SummarySettings = Field(default_factory=SummarySettings)


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return "; ".join(lines)


def settings_from_dict(d: dict | None) -> Settings:
    try:
        return Settings.model_validate(d or {})
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_settings(path: str | Path | None) -> Settings:
    if path is None:
        return Settings()
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return settings_from_dict(data)
