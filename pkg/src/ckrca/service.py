"""Read-only HTTP inference over a persisted CK graph and model."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from . import ckgraph, forest
from .config import Settings
from .inference import METHODS, render_document, run_query
from .text import Embedder, build_embedder

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class _Artifacts:
    ck: ckgraph.CkGraph
    model: forest.OutageClusterForest | None
    embedder: Embedder


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def _positive_int(body: dict, key: str, default: int) -> int:
    v = body.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ValueError(f"{key} must be a positive integer")
    return v


def create_app(
    graph_path: str | Path | None = None,
    model_path: str | Path | None = None,
    settings: Settings | None = None,
    load: bool = True,
) -> FastAPI:
    """Build the app. With ``load=False`` artifacts load on ``app.state.load()``; until then every
    inference endpoint answers 503."""
    settings = settings or Settings()
    app = FastAPI(title="ckrca inference", version="1")
    app.state.artifacts = None

    def _load() -> None:
        ck = ckgraph.load(graph_path)
        model = forest.load_model(model_path) if model_path else None
        app.state.artifacts = _Artifacts(ck, model, build_embedder(ck.metadata.get("embedder")))

    app.state.load = _load
    if load:
        _load()

    @app.get("/health")
    def health():
        arts = app.state.artifacts
        if arts is None:
            return _error(503, "artifacts not loaded")
        return {"status": "ok", "graph_version": ckgraph.GRAPH_FORMAT_VERSION}

    @app.get("/v1/graph/summary")
    def graph_summary():
        arts = app.state.artifacts
        if arts is None:
            return _error(503, "artifacts not loaded")
        return arts.ck.summary()

    @app.post("/v1/infer")
    async def infer(request: Request):
        arts = app.state.artifacts
        if arts is None:
            return _error(503, "artifacts not loaded")
        try:
            body = json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError):
            return _error(400, "body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "body must be a JSON object")
        ids = body.get("alert_ids")
        if not isinstance(ids, list) or not ids or not all(isinstance(a, str) for a in ids):
            return _error(400, "alert_ids must be a non-empty list of strings")
        method = body.get("method", "clust")
        if not isinstance(method, str):
            return _error(400, "method must be a string")
        if method not in METHODS:
            return _error(422, f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
        try:
            k = _positive_int(body, "k", settings.k)
            L = _positive_int(body, "L", settings.L)
            top_n = _positive_int(body, "top_n", settings.top_n)
        except ValueError as exc:
            return _error(400, str(exc))
        doc = run_query(arts.ck, arts.model, ids, method, k, L, top_n, arts.embedder)
        return Response(render_document(doc), media_type="application/json")

    return app
