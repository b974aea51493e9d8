"""End-to-end graph construction and the recommender estimator."""

from __future__ import annotations

import logging
from datetime import timedelta
from typing import Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .causal import discover
from .ckgraph import CkGraph, link_alerts_to_symptoms
from .config import Settings
from .forest import OutageClusterForest, build_training_set, train
from .ingestion import (
    AlertLog,
    IndicatorMatrix,
    OutageReport,
    build_indicator_matrix,
    filter_columns,
    filter_rows,
    format_timestamp,
)
from .inference import InferenceResult, InferenceQuery, infer, run_query
from .knowledge import build_kg, cluster_outages
from .text import Embedder, Summarizer, build_embedder, build_summarizer

logger = logging.getLogger(__name__)


def corpus_period(log: AlertLog, reports: Sequence[OutageReport], t: float):
    """Window-aligned period covering every firing and outage, anchored at midnight UTC of the first event."""
    times = [a.fired_at for a in log] + [r.start_time for r in reports] + [r.resolution_time for r in reports]
    first, last = min(times), max(times)
    origin = first.replace(hour=0, minute=0, second=0)
    width = timedelta(minutes=t)
    n = int((last - origin) / width) + 1
    return origin, origin + n * width


def prepare_matrix(
    log: AlertLog,
    reports: Sequence[OutageReport],
    settings: Settings,
    exclude: tuple | None = None,
) -> IndicatorMatrix:
    """Bin, then filter columns and rows. ``exclude`` drops windows overlapping a (start, end) span."""
    period = corpus_period(log, reports, settings.window_minutes) if len(log) else None
    m = build_indicator_matrix(log, settings.window_minutes, period)
    pre = timedelta(minutes=settings.pre_window_minutes)
    m = filter_columns(m, reports, settings.min_fires, log=log, pre_window=pre)
    if exclude is not None:
        m = m.drop_rows_between(*exclude)
    return filter_rows(m, settings.row_drop_fraction, settings.seed)


def build_ck_graph(
    log: AlertLog,
    reports: Sequence[OutageReport],
    settings: Settings | None = None,
    summarizer: Summarizer | None = None,
    embedder: Embedder | None = None,
    exclude: tuple | None = None,
    kg_cache: dict | None = None,
) -> tuple[CkGraph, IndicatorMatrix]:
    settings = settings or Settings()
    summarizer = summarizer or build_summarizer(settings.summary.as_provider_config())
    embedder = embedder or build_embedder(settings.embedding.as_provider_config())
    m = prepare_matrix(log, reports, settings, exclude)
    cpdag, _ = discover(m, settings.alpha, settings.max_cond)
    kg = build_kg(reports, summarizer, embedder) if kg_cache is None else _cached_kg(reports, summarizer, embedder, kg_cache)
    clusters = cluster_outages(kg, settings.k_max, settings.cluster_tolerance)
    meta = {
        "window_minutes": settings.window_minutes,
        "alpha": settings.alpha,
        "max_cond": settings.max_cond,
        "pre_window_minutes": settings.pre_window_minutes,
        "min_fires": settings.min_fires,
        "row_drop_fraction": settings.row_drop_fraction,
        "seed": settings.seed,
        "period": [format_timestamp(m.window_start_times[0]), format_timestamp(m.window_start_times[-1])]
        if m.window_start_times
        else None,
        "matrix_shape": list(m.shape),
        "embedder": embedder.config() if hasattr(embedder, "config") else {"kind": "custom"},
        "summarizer": summarizer.config() if hasattr(summarizer, "config") else {"kind": "custom"},
    }
    ck = link_alerts_to_symptoms(
        cpdag, kg, log, reports, timedelta(minutes=settings.pre_window_minutes), clusters, meta
    )
    return ck, m


def _cached_kg(reports, summarizer, embedder, cache: dict):
    """Reuse per-outage nodes across rebuilds; the default providers are pure functions."""
    from .knowledge import KnowledgeGraph

    missing = [r for r in reports if r.outage_id not in cache]
    if missing:
        built = build_kg(missing, summarizer, embedder)
        cache.update(built.outages)
    kg = KnowledgeGraph()
    for r in reports:
        kg.outages[r.outage_id] = cache[r.outage_id]
    return kg


def train_predictor(
    ck: CkGraph, log: AlertLog, reports: Sequence[OutageReport], settings: Settings | None = None
) -> OutageClusterForest | None:
    """Fit the cluster forest; returns None when there is nothing to discriminate."""
    settings = settings or Settings()
    ts = build_training_set(ck, log, reports, timedelta(minutes=settings.pre_window_minutes))
    if len(set(ts.labels.tolist())) < 2 or not ts.feature_names:
        logger.warning("fewer than two clusters or no alert features; the cluster predictor is disabled")
        return None
    return train(ts, settings.n_trees, settings.max_depth, settings.seed)


class RootCauseRecommender(BaseEstimator):
    """Build the CK graph and cluster forest from history, then rank past fixes for new alerts.

    ``fit(log, reports)`` sets ``ck_graph_``, ``model_`` and ``matrix_``;
    ``predict(alert_ids)`` returns ranked :class:`Recommendation` objects.
    """

    def __init__(
        self,
        method: str = "clust",
        window_minutes: float = 15,
        min_fires: int = 10,
        row_drop_fraction: float = 0.95,
        pre_window_minutes: float = 60,
        alpha: float = 0.05,
        max_cond: int = 3,
        k: int = 9,
        L: int = 3,
        top_n: int = 5,
        n_trees: int = 50,
        max_depth: int = 25,
        cluster_tolerance: float = 0.05,
        k_max: int = 150,
        embedding_dim: int = 256,
        max_sentences: int = 3,
        random_state: int = 0,
    ):
        self.method = method
        self.window_minutes = window_minutes
        self.min_fires = min_fires
        self.row_drop_fraction = row_drop_fraction
        self.pre_window_minutes = pre_window_minutes
        self.alpha = alpha
        self.max_cond = max_cond
        self.k = k
        self.L = L
        self.top_n = top_n
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.cluster_tolerance = cluster_tolerance
        self.k_max = k_max
        self.embedding_dim = embedding_dim
        self.max_sentences = max_sentences
        self.random_state = random_state

    def to_settings(self) -> Settings:
        p = self.get_params()
        return Settings(
            window_minutes=p["window_minutes"],
            min_fires=p["min_fires"],
            row_drop_fraction=p["row_drop_fraction"],
            pre_window_minutes=p["pre_window_minutes"],
            alpha=p["alpha"],
            max_cond=p["max_cond"],
            k=p["k"],
            L=p["L"],
            top_n=p["top_n"],
            n_trees=p["n_trees"],
            max_depth=p["max_depth"],
            cluster_tolerance=p["cluster_tolerance"],
            k_max=p["k_max"],
            seed=p["random_state"],
            embedding={"dim": p["embedding_dim"]},
            summary={"max_sentences": p["max_sentences"]},
        )

    @classmethod
    def from_settings(cls, s: Settings, method: str = "clust") -> "RootCauseRecommender":
        return cls(
            method=method, window_minutes=s.window_minutes, min_fires=s.min_fires,
            row_drop_fraction=s.row_drop_fraction, pre_window_minutes=s.pre_window_minutes, alpha=s.alpha,
            max_cond=s.max_cond, k=s.k, L=s.L, top_n=s.top_n, n_trees=s.n_trees, max_depth=s.max_depth,
            cluster_tolerance=s.cluster_tolerance, k_max=s.k_max, embedding_dim=s.embedding.dim,
            max_sentences=s.summary.max_sentences, random_state=s.seed,
        )

    def fit(self, log: AlertLog, reports: Sequence[OutageReport], *, exclude=None, kg_cache=None):
        if self.method not in ("path", "sim", "clust"):
            raise ValueError(f"unknown method {self.method!r}")
        settings = self.to_settings()
        self.ck_graph_, self.matrix_ = build_ck_graph(log, reports, settings, exclude=exclude, kg_cache=kg_cache)
        self.model_ = train_predictor(self.ck_graph_, log, reports, settings) if self.method == "clust" else None
        self.embedder_ = build_embedder(settings.embedding.as_provider_config())
        return self

    def query(self, alert_ids: Sequence[str], titles: Sequence[str] | None = None) -> InferenceResult:
        check_is_fitted(self, "ck_graph_")
        ck = self.ck_graph_
        titles = list(titles) if titles else [ck.title_of(a) for a in sorted(set(alert_ids))]
        q = InferenceQuery(set(alert_ids), titles, self.k, self.L, self.top_n)
        return infer(ck, q, self.method, self.model_, self.embedder_)

    def predict(self, alert_ids: Sequence[str]):
        return self.query(alert_ids).recommendations

    def query_document(self, alert_ids: Sequence[str]) -> dict:
        check_is_fitted(self, "ck_graph_")
        return run_query(
            self.ck_graph_, self.model_, alert_ids, self.method, self.k, self.L, self.top_n, self.embedder_
        )
