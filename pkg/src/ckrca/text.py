"""Summarization and embedding providers plus vector similarity helpers.

The defaults are deterministic: a lead-k extractive summarizer and a
signed feature-hashing embedder that averages token vectors. Either can be
swapped for a remote service speaking the small JSON protocol implemented
by :class:`ExternalProvider`.
"""

from __future__ import annotations

import logging
import re
import threading
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import httpx
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.feature_extraction.text import HashingVectorizer

logger = logging.getLogger(__name__)

DEFAULT_DIM = 256
TOKEN_PATTERN = r"[A-Za-z0-9]+"
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_BOILERPLATE_LINE = re.compile(r"^\s*(#+|[-*=_]{3,}|>)\s*$")
_LEAD_MARKUP = re.compile(r"^\s*(?:#+|[-*•]|\d+[.)])\s+")


class ProviderError(RuntimeError):
    pass


@dataclass(frozen=True)
class SummaryText:
    text: str
    provider: str = "extractive_lead"
    fallback: bool = False


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    source_kind: str = "hashing"
    degenerate: bool = False

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self) -> int:
        return len(self.values)


def tokenize(text: str) -> list[str]:
    return [t.lower() for t in re.findall(TOKEN_PATTERN, text)]


def split_sentences(text: str) -> list[str]:
    return [s for s in (p.strip() for p in _SENTENCE_SPLIT.split(text)) if s]


def strip_boilerplate(text: str) -> str:
    """Drop markup-only lines and leading bullet/heading markers, collapse whitespace."""
    lines = []
    for line in text.splitlines():
        if _BOILERPLATE_LINE.match(line):
            continue
        lines.append(_LEAD_MARKUP.sub("", line))
    return " ".join(" ".join(lines).split())


class Summarizer(Protocol):
    def summarize(self, text: str) -> SummaryText: ...


class Embedder(Protocol):
    dim: int
    source_kind: str

    def embed_text(self, text: str) -> EmbeddingVector: ...

    def embed_many(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


class LeadSummarizer:
    """First ``max_sentences`` sentences, capped at ``max_tokens`` whitespace tokens."""

    provider = "extractive_lead"

    def __init__(self, max_sentences: int = 3, max_tokens: int = 128):
        if max_sentences < 1 or max_tokens < 1:
            raise ValueError("max_sentences and max_tokens must be >= 1")
        self.max_sentences = max_sentences
        self.max_tokens = max_tokens

    def summarize(self, text: str) -> SummaryText:
        clean = strip_boilerplate(text)
        lead = " ".join(split_sentences(clean)[: self.max_sentences])
        words = lead.split()
        if len(words) > self.max_tokens:
            lead = " ".join(words[: self.max_tokens])
        return SummaryText(lead, self.provider)

    def config(self) -> dict:
        return {"kind": "extractive_lead", "max_sentences": self.max_sentences, "max_tokens": self.max_tokens}


class HashingEmbedder(BaseEstimator, TransformerMixin):
    """Signed feature-hashing bag of tokens, averaged and L2-normalized.

    Stateless, so ``fit`` is a no-op; ``transform`` maps a list of texts to
    an (n, dim) array for use inside sklearn pipelines.
    """

    source_kind = "hashing"

    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim

    def _vectorizer(self) -> HashingVectorizer:
        # alternate_sign gives the signed hash; norm=None so we normalize ourselves
        return HashingVectorizer(
            n_features=self.dim,
            token_pattern=TOKEN_PATTERN,
            lowercase=True,
            alternate_sign=True,
            norm=None,
        )

    def _raw(self, texts: Sequence[str]) -> np.ndarray:
        counts = self._vectorizer().transform(list(texts)).toarray()
        n_tokens = np.array([len(tokenize(t)) for t in texts], dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = counts / n_tokens[:, None]
        return np.nan_to_num(mean)

    def embed_many(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        out = []
        for row in self._raw(texts):
            norm = np.linalg.norm(row)
            if norm == 0:
                out.append(EmbeddingVector(np.zeros(self.dim), self.source_kind, degenerate=True))
            else:
                out.append(EmbeddingVector(row / norm, self.source_kind))
        return out

    def embed_text(self, text: str) -> EmbeddingVector:
        return self.embed_many([text])[0]

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        return np.vstack([v.values for v in self.embed_many(list(X))]) if len(X) else np.zeros((0, self.dim))

    def config(self) -> dict:
        return {"kind": "hashing", "dim": self.dim}


@dataclass
class ExternalProvider:
    """Client for a remote embed/summarize service.

    Wire protocol::

        POST {base_url}/v1/embed      {"texts": [str]} -> {"vectors": [[float]]}
        POST {base_url}/v1/summarize  {"text": str}    -> {"summary": str}

    Summaries fall back to the lead-k default when the service is
    unreachable; embeddings never fall back, since mixing vector spaces
    would corrupt similarity.
    """

    base_url: str
    dim: int = DEFAULT_DIM
    timeout: float = 10.0
    max_in_flight: int = 4
    transport: httpx.BaseTransport | None = None
    fallback_summarizer: LeadSummarizer = field(default_factory=LeadSummarizer)
    source_kind: str = "external"

    def __post_init__(self):
        self._slots = threading.BoundedSemaphore(self.max_in_flight)
        self._client = httpx.Client(base_url=self.base_url, timeout=self.timeout, transport=self.transport)

    def _post(self, path: str, body: dict) -> dict:
        with self._slots:
            resp = self._client.post(path, json=body)
        resp.raise_for_status()
        return resp.json()

    def summarize(self, text: str) -> SummaryText:
        try:
            summary = self._post("/v1/summarize", {"text": text})["summary"]
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            logger.warning("summarize service unavailable (%s); using lead-k fallback", exc)
            fb = self.fallback_summarizer.summarize(text)
            return SummaryText(fb.text, fb.provider, fallback=True)
        return SummaryText(str(summary), "external")

    def embed_many(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        try:
            vectors = self._post("/v1/embed", {"texts": list(texts)})["vectors"]
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise ProviderError(f"embedding service failed: {exc}") from exc
        if len(vectors) != len(texts):
            raise ProviderError(f"embedding service returned {len(vectors)} vectors for {len(texts)} texts")
        out = []
        for v in vectors:
            arr = np.asarray(v, dtype=float)
            if arr.shape != (self.dim,):
                raise ProviderError(f"embedding dimension {arr.shape} does not match configured {self.dim}")
            if not np.all(np.isfinite(arr)):
                raise ProviderError("embedding service returned non-finite values")
            norm = np.linalg.norm(arr)
            if norm == 0:
                out.append(EmbeddingVector(arr, self.source_kind, degenerate=True))
            else:
                out.append(EmbeddingVector(arr / norm, self.source_kind))
        return out

    def embed_text(self, text: str) -> EmbeddingVector:
        return self.embed_many([text])[0]

    def config(self) -> dict:
        return {"kind": "external", "dim": self.dim, "base_url": self.base_url, "timeout": self.timeout}

    def close(self) -> None:
        self._client.close()


def summarize(text: str, max_sentences: int = 3, provider: Summarizer | None = None) -> SummaryText:
    return (provider or LeadSummarizer(max_sentences)).summarize(text)


def embed_text(text: str, provider: Embedder | None = None) -> EmbeddingVector:
    return (provider or HashingEmbedder()).embed_text(text)


def embed_alert_set(titles: Sequence[str], provider: Embedder | None = None) -> EmbeddingVector:
    """Mean of per-title embeddings, re-normalized."""
    if not titles:
        raise ValueError("embed_alert_set needs at least one title")
    vecs = (provider or HashingEmbedder()).embed_many(list(titles))
    kind = vecs[0].source_kind
    mean = np.mean([v.values for v in vecs], axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0:
        return EmbeddingVector(mean, kind, degenerate=True)
    return EmbeddingVector(mean / norm, kind)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_distance_matrix(X: np.ndarray) -> np.ndarray:
    """Pairwise 1 - cosine for row vectors; zero rows are treated as maximally distant."""
    X = np.asarray(X, dtype=float)
    norms = np.linalg.norm(X, axis=1)
    safe = np.where(norms == 0, 1.0, norms)
    U = X / safe[:, None]
    D = 1.0 - np.clip(U @ U.T, -1.0, 1.0)
    zero = norms == 0
    if zero.any():
        D[zero, :] = 1.0
        D[:, zero] = 1.0
    np.fill_diagonal(D, 0.0)
    return D


def build_embedder(config: dict | None) -> Embedder:
    config = dict(config or {"kind": "hashing"})
    kind = config.pop("kind", "hashing")
    if kind == "hashing":
        return HashingEmbedder(dim=config.get("dim", DEFAULT_DIM))
    if kind == "external":
        return ExternalProvider(
            base_url=config["base_url"], dim=config.get("dim", DEFAULT_DIM), timeout=config.get("timeout", 10.0)
        )
    raise ValueError(f"unknown embedding provider {kind!r}")


def build_summarizer(config: dict | None) -> Summarizer:
    config = dict(config or {"kind": "extractive_lead"})
    kind = config.pop("kind", "extractive_lead")
    if kind == "extractive_lead":
        return LeadSummarizer(config.get("max_sentences", 3), config.get("max_tokens", 128))
    if kind == "external":
        return ExternalProvider(base_url=config["base_url"], timeout=config.get("timeout", 10.0))
    raise ValueError(f"unknown summary provider {kind!r}")
