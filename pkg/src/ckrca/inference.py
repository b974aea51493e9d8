"""Ranking past outages' root causes and remediations from the alerts of a new outage.

Three strategies share one result shape:

* ``path``  - sum of inverse path lengths from fired alerts to each root cause
* ``sim``   - cosine between the fired-alert title embedding and symptom embeddings
* ``clust`` - cluster votes from traversal plus the forest's cluster probabilities,
  then ``sim`` ranking inside the top-L clusters
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ckgraph import CkGraph, dumps, paths_from
from .forest import OutageClusterForest, indicator_vector
from .text import Embedder, build_embedder, embed_alert_set

logger = logging.getLogger(__name__)

METHODS = ("path", "sim", "clust")


class EmbedderMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Recommendation:
    outage_id: str
    root_cause_summary: str
    remediation_summary: str
    score: float
    rank: int
    method: str
    cluster_id: int | None = None

    def to_dict(self) -> dict:
        d = {
            "rank": self.rank,
            "score": self.score,
            "method": self.method,
            "outage_id": self.outage_id,
            "root_cause": self.root_cause_summary,
            "remediation": self.remediation_summary,
        }
        if self.cluster_id is not None:
            d["cluster_id"] = self.cluster_id
        return d


@dataclass
class InferenceQuery:
    fired_alert_ids: set[str]
    fired_alert_titles: list[str] = field(default_factory=list)
    k: int = 9
    L: int = 3
    top_n: int = 5

    def __post_init__(self):
        self.fired_alert_ids = set(self.fired_alert_ids)
        if not self.fired_alert_ids:
            raise ValueError("at least one fired alert is required")
        if min(self.k, self.L, self.top_n) < 1:
            raise ValueError("k, L and top_n must be >= 1")


@dataclass
class InferenceResult:
    recommendations: list[Recommendation]
    method: str
    reason: str | None = None
    flags: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter(self.recommendations)

    def __len__(self) -> int:
        return len(self.recommendations)

    def __getitem__(self, i):
        return self.recommendations[i]


def _recommend(ck: CkGraph, scored: dict[str, float], method: str, top_n: int, clusters: dict[str, int] | None = None):
    ranked = sorted(scored.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    out = []
    for i, (oid, score) in enumerate(ranked, start=1):
        e = ck.kg.outages[oid]
        out.append(
            Recommendation(
                oid, e.root_cause.summary, e.remediation.summary, float(score), i, method,
                None if clusters is None else clusters.get(oid),
            )
        )
    return out


def path_scores(ck: CkGraph, fired: Sequence[str], k: int = 9) -> dict[str, float]:
    """Score_path per outage: sum over paths of 1/d, with d measured to the root-cause node.

    A path reaching a symptom after ``l`` hops reaches its root cause after
    ``l + 1``, so symptoms are searched within k hops and root causes within k + 1.
    """
    scores: dict[str, float] = {}
    for a in sorted(set(fired)):
        for (oid, length), count in paths_from(ck, a, k).items():
            scores[oid] = scores.get(oid, 0.0) + count / (length + 1)
    return scores


def infer_path(ck: CkGraph, q: InferenceQuery) -> InferenceResult:
    scores = path_scores(ck, q.fired_alert_ids, q.k)
    if not scores:
        return InferenceResult([], "path", reason="no_reachable_symptom")
    return InferenceResult(_recommend(ck, scores, "path", q.top_n), "path")


def _query_embedding(ck: CkGraph, q: InferenceQuery, embedder: Embedder) -> np.ndarray:
    titles = q.fired_alert_titles or [ck.title_of(a) for a in sorted(q.fired_alert_ids)]
    vec = embed_alert_set(titles, embedder)
    stored = ck.kg.embeddings("symptom")
    if stored.size and stored.shape[1] != len(vec.values):
        raise EmbedderMismatchError(
            f"query embedding has dimension {len(vec.values)}, graph stores {stored.shape[1]}"
        )
    return np.asarray(vec.values)


def sim_scores(ck: CkGraph, query: np.ndarray, outage_ids: Sequence[str] | None = None) -> dict[str, float]:
    ids = ck.kg.outage_ids if outage_ids is None else sorted(outage_ids)
    qn = np.linalg.norm(query)
    out = {}
    for oid in ids:
        s = ck.kg.outages[oid].symptom.embedding
        sn = np.linalg.norm(s)
        # rounded so mathematically equal cosines tie exactly and fall back to id order
        out[oid] = 0.0 if qn == 0 or sn == 0 else round(float(np.clip(query @ s / (qn * sn), -1.0, 1.0)), 12)
    return out


def infer_sim(ck: CkGraph, q: InferenceQuery, embedder: Embedder | None = None) -> InferenceResult:
    embedder = embedder or build_embedder(ck.metadata.get("embedder"))
    query = _query_embedding(ck, q, embedder)
    return InferenceResult(_recommend(ck, sim_scores(ck, query), "sim", q.top_n), "sim")


def cluster_traversal_rank(ck: CkGraph, fired: Sequence[str], k: int = 9) -> dict[int, float]:
    """Normalized cluster votes: +1 per (fired alert, reached symptom) pair."""
    votes: Counter = Counter()
    for a in sorted(set(fired)):
        reached = {oid for (oid, _length) in paths_from(ck, a, k)}
        for oid in sorted(reached):
            c = ck.cluster_of(oid)
            if c is not None:
                votes[c] += 1
    total = sum(votes.values())
    return {c: v / total for c, v in sorted(votes.items())} if total else {}


def cluster_model_rank(ck: CkGraph, model: OutageClusterForest | None, fired: Sequence[str]) -> dict[int, float]:
    if model is None:
        return {}
    names = getattr(model, "feature_names_", None) or list(ck.cpdag.nodes)
    x = indicator_vector(fired, names)
    p = model.predict_proba(x[None, :])[0]
    return {int(c): float(v) for c, v in zip(model.classes_, p)}


def infer_clust(
    ck: CkGraph, model: OutageClusterForest | None, q: InferenceQuery, embedder: Embedder | None = None
) -> InferenceResult:
    if ck.clusters is None:
        raise ValueError("graph has no cluster assignment")
    embedder = embedder or build_embedder(ck.metadata.get("embedder"))
    rank1 = cluster_traversal_rank(ck, q.fired_alert_ids, q.k)
    rank2 = cluster_model_rank(ck, model, q.fired_alert_ids)
    all_clusters = sorted(set(ck.clusters.merged.values()))
    combined = {c: rank1.get(c, 0.0) + rank2.get(c, 0.0) for c in all_clusters}
    query = _query_embedding(ck, q, embedder)

    uniform = not rank2 or np.ptp(list(rank2.values())) < 1e-12
    if not rank1 and uniform:
        res = InferenceResult(_recommend(ck, sim_scores(ck, query), "clust", q.top_n, ck.clusters.merged), "clust")
        res.flags.append("fallback_sim")
        res.reason = "no_reachable_symptom_and_uninformative_model"
        return res

    positive = [(c, s) for c, s in combined.items() if s > 0]
    top = [c for c, _ in sorted(positive, key=lambda cs: (-cs[1], cs[0]))[: q.L]]
    members = [o for c in top for o in ck.clusters.members(c)]
    scores = sim_scores(ck, query, members)
    return InferenceResult(_recommend(ck, scores, "clust", q.top_n, ck.clusters.merged), "clust")


def infer(
    ck: CkGraph,
    q: InferenceQuery,
    method: str = "clust",
    model: OutageClusterForest | None = None,
    embedder: Embedder | None = None,
) -> InferenceResult:
    if method == "path":
        return infer_path(ck, q)
    if method == "sim":
        return infer_sim(ck, q, embedder)
    if method == "clust":
        return infer_clust(ck, model, q, embedder)
    raise ValueError(f"unknown inference method {method!r}")


def run_query(
    ck: CkGraph,
    model: OutageClusterForest | None,
    alert_ids: Sequence[str],
    method: str = "clust",
    k: int = 9,
    L: int = 3,
    top_n: int = 5,
    embedder: Embedder | None = None,
) -> dict:
    """Answer a query by alert ids and return the result document shared by the CLI and the service."""
    if method not in METHODS:
        raise ValueError(f"unknown inference method {method!r}")
    requested = sorted(set(alert_ids))
    known = [a for a in requested if ck.has_alert(a) or a in ck.alert_titles]
    unknown = [a for a in requested if a not in known]
    doc = {
        "query": {"alert_ids": requested, "method": method, "k": k, "L": L, "top_n": top_n},
        "unknown_alert_ids": unknown,
        "results": [],
        "reason": None,
        "flags": [],
    }
    if not known:
        doc["reason"] = "no_known_alerts"
        return doc
    q = InferenceQuery(set(known), [ck.title_of(a) for a in known], k, L, top_n)
    res = infer(ck, q, method, model, embedder)
    doc["results"] = [r.to_dict() for r in res.recommendations]
    doc["reason"] = res.reason
    doc["flags"] = list(res.flags)
    return doc


def render_document(doc: dict) -> str:
    return dumps(doc)
