"""Outage knowledge graph, per-view clustering, and cluster merging."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .ingestion import OutageReport, format_timestamp
from .text import Embedder, EmbeddingVector, HashingEmbedder, LeadSummarizer, Summarizer, cosine_distance_matrix

logger = logging.getLogger(__name__)

NODE_KINDS = ("symptom", "root_cause", "remediation")
_SECTION = {"symptom": "symptom_text", "root_cause": "root_cause_text", "remediation": "remediation_text"}


@dataclass
class KgNode:
    kind: str
    outage_id: str
    summary: str
    embedding: np.ndarray

    @property
    def node_id(self) -> str:
        return f"{self.kind}:{self.outage_id}"

    def to_dict(self) -> dict:
        return {
            "id": self.node_id,
            "kind": self.kind,
            "outage_id": self.outage_id,
            "summary": self.summary,
            "embedding": [float(v) for v in self.embedding],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KgNode":
        return cls(d["kind"], d["outage_id"], d["summary"], np.asarray(d["embedding"], dtype=float))


@dataclass
class OutageEntry:
    """The three nodes of one outage plus its time span."""

    outage_id: str
    start_time: str
    resolution_time: str
    symptom: KgNode
    root_cause: KgNode
    remediation: KgNode

    def node(self, kind: str) -> KgNode:
        return getattr(self, kind)


@dataclass
class KnowledgeGraph:
    outages: dict[str, OutageEntry] = field(default_factory=dict)

    @property
    def outage_ids(self) -> list[str]:
        return sorted(self.outages)

    @property
    def nodes(self) -> list[KgNode]:
        return [self.outages[o].node(k) for o in self.outage_ids for k in NODE_KINDS]

    @property
    def edges(self) -> list[tuple[str, str, str]]:
        out = []
        for o in self.outage_ids:
            e = self.outages[o]
            out.append((e.symptom.node_id, "has_root_cause", e.root_cause.node_id))
            out.append((e.symptom.node_id, "has_remediation", e.remediation.node_id))
        return out

    def embeddings(self, kind: str) -> np.ndarray:
        ids = self.outage_ids
        if not ids:
            return np.zeros((0, 0))
        return np.vstack([self.outages[o].node(kind).embedding for o in ids])

    def to_dict(self) -> dict:
        return {
            "outages": [
                {
                    "outage_id": o,
                    "start_time": self.outages[o].start_time,
                    "resolution_time": self.outages[o].resolution_time,
                }
                for o in self.outage_ids
            ],
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [{"source": s, "relation": r, "target": t} for s, r, t in self.edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnowledgeGraph":
        by_outage: dict[str, dict[str, KgNode]] = {}
        for nd in d["nodes"]:
            n = KgNode.from_dict(nd)
            by_outage.setdefault(n.outage_id, {})[n.kind] = n
        kg = cls()
        for od in d["outages"]:
            nodes = by_outage[od["outage_id"]]
            kg.outages[od["outage_id"]] = OutageEntry(
                od["outage_id"], od["start_time"], od["resolution_time"],
                nodes["symptom"], nodes["root_cause"], nodes["remediation"],
            )
        return kg


def build_kg(
    reports: Sequence[OutageReport],
    summarizer: Summarizer | None = None,
    embedder: Embedder | None = None,
) -> KnowledgeGraph:
    """Three nodes per report (symptom, root cause, remediation) embedded from their summaries."""
    if not reports:
        raise ValueError("build_kg needs at least one outage report")
    summarizer = summarizer or LeadSummarizer()
    embedder = embedder or HashingEmbedder()
    kg = KnowledgeGraph()
    ids = [r.outage_id for r in reports]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate outage_id in reports")
    summaries: list[tuple[str, str, str]] = []
    for r in reports:
        for kind in NODE_KINDS:
            text = getattr(r, _SECTION[kind])
            if not text.strip():
                raise ValueError(f"outage {r.outage_id}: empty {kind} text")
            summaries.append((r.outage_id, kind, summarizer.summarize(text).text))
    vectors = embedder.embed_many([s[2] for s in summaries])
    grouped: dict[str, dict[str, KgNode]] = {}
    for (oid, kind, summary), vec in zip(summaries, vectors):
        grouped.setdefault(oid, {})[kind] = KgNode(kind, oid, summary, np.asarray(vec.values, dtype=float))
    for r in reports:
        g = grouped[r.outage_id]
        kg.outages[r.outage_id] = OutageEntry(
            r.outage_id, format_timestamp(r.start_time), format_timestamp(r.resolution_time),
            g["symptom"], g["root_cause"], g["remediation"],
        )
    return kg


def _as_matrix(embeddings) -> np.ndarray:
    rows = [np.asarray(e.values if isinstance(e, EmbeddingVector) else e, dtype=float) for e in embeddings]
    return np.vstack(rows) if rows else np.zeros((0, 0))


def _canonical(labels: np.ndarray) -> np.ndarray:
    """Relabel so clusters are numbered by first appearance."""
    mapping: dict[int, int] = {}
    return np.array([mapping.setdefault(int(v), len(mapping)) for v in labels], dtype=int)


def average_linkage_merges(D: np.ndarray) -> list[tuple[int, int, float]]:
    """Average-linkage merge sequence on a distance matrix.

    Clusters are named by their smallest member index. Each step merges the
    closest pair; exact ties go to the lexicographically smallest
    (id_a, id_b). Returns [(kept_id, absorbed_id, distance), ...].
    """
    n = D.shape[0]
    W = np.array(D, dtype=float, copy=True)
    np.fill_diagonal(W, np.inf)
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges = []
    for _ in range(n - 1):
        masked = np.where(active[:, None] & active[None, :], W, np.inf)
        masked = np.triu(masked, 1) + np.tril(np.full_like(masked, np.inf))
        flat = int(np.argmin(masked))
        a, b = divmod(flat, n)
        d = masked[a, b]
        merges.append((a, b, float(d)))
        # Lance-Williams update for average linkage
        new = (size[a] * W[a] + size[b] * W[b]) / (size[a] + size[b])
        W[a, :] = new
        W[:, a] = new
        W[a, a] = np.inf
        size[a] += size[b]
        active[b] = False
    return merges


def labels_from_merges(n: int, merges: Sequence[tuple[int, int, float]], n_clusters: int) -> np.ndarray:
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b, _ in merges[: n - n_clusters]:
        parent[find(b)] = find(a)
    return _canonical(np.array([find(i) for i in range(n)]))


class CosineAgglomerative(BaseEstimator, ClusterMixin):
    """Average-linkage agglomerative clustering under cosine distance.

    Fitted attributes: ``labels_``, ``merges_`` (the full merge sequence,
    so other cuts can be read off with :meth:`labels_for`).
    """

    def __init__(self, n_clusters: int = 2):
        self.n_clusters = n_clusters

    def fit(self, X, y=None):
        X = check_array(_as_matrix(X) if not isinstance(X, np.ndarray) else X, ensure_min_samples=1)
        n = X.shape[0]
        if not 1 <= self.n_clusters <= n:
            raise ValueError(f"n_clusters={self.n_clusters} must be in [1, {n}]")
        self.distances_ = cosine_distance_matrix(X)
        self.merges_ = average_linkage_merges(self.distances_)
        self.labels_ = labels_from_merges(n, self.merges_, self.n_clusters)
        return self

    def labels_for(self, n_clusters: int) -> np.ndarray:
        check_is_fitted(self, "merges_")
        return labels_from_merges(len(self.labels_), self.merges_, n_clusters)


def agglomerative_cluster(embeddings, K: int) -> np.ndarray:
    return CosineAgglomerative(n_clusters=K).fit(_as_matrix(embeddings)).labels_


def silhouette_from_distances(D: np.ndarray, labels: Sequence[int]) -> float:
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ValueError("silhouette needs at least two clusters")
    n = len(labels)
    scores = np.zeros(n)
    members = {c: np.flatnonzero(labels == c) for c in uniq}
    for i in range(n):
        own = members[labels[i]]
        if len(own) == 1:
            continue
        a = D[i, own].sum() / (len(own) - 1)
        b = min(D[i, idx].mean() for c, idx in members.items() if c != labels[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def silhouette_score(embeddings, labels: Sequence[int]) -> float:
    """Mean silhouette under cosine distance; singleton clusters score 0."""
    return silhouette_from_distances(cosine_distance_matrix(_as_matrix(embeddings)), labels)


def choose_k(scores: Mapping[int, float], tolerance: float = 0.05) -> int:
    """Smallest K whose score is within ``tolerance`` (relative) of the best."""
    best = max(scores.values())
    threshold = best - tolerance * abs(best)
    return min(k for k, s in scores.items() if s >= threshold - 1e-12)


def select_optimal_k(
    embeddings, k_range: tuple[int, int] | None = None, tolerance: float = 0.05, *, return_scores: bool = False
):
    X = _as_matrix(embeddings)
    n = X.shape[0]
    if n < 3:
        raise ValueError("select_optimal_k needs at least 3 points")
    lo, hi = k_range if k_range is not None else (2, min(n - 1, 150))
    if hi > n:
        raise ValueError(f"k_max={hi} exceeds the number of points {n}")
    model = CosineAgglomerative(n_clusters=1).fit(X)
    scores = {}
    for k in range(max(lo, 2), min(hi, n - 1) + 1):
        scores[k] = silhouette_from_distances(model.distances_, model.labels_for(k))
    if not scores:
        raise ValueError(f"empty K range {lo}..{hi} for {n} points")
    k = choose_k(scores, tolerance)
    return (k, scores) if return_scores else k


class SilhouetteAgglomerative(BaseEstimator, ClusterMixin):
    """Cosine agglomerative clustering with K chosen by the silhouette tolerance rule.

    Small inputs are handled without silhouette: one point gives one
    cluster; two points share a cluster only if their embeddings coincide.
    """

    def __init__(self, k_max: int = 150, tolerance: float = 0.05):
        self.k_max = k_max
        self.tolerance = tolerance

    def fit(self, X, y=None):
        X = _as_matrix(X) if not isinstance(X, np.ndarray) else np.asarray(X, dtype=float)
        n = X.shape[0]
        if n == 0:
            raise ValueError("no points to cluster")
        self.silhouette_scores_ = {}
        if n == 1:
            self.n_clusters_, self.labels_ = 1, np.zeros(1, dtype=int)
        elif n == 2:
            same = cosine_distance_matrix(X)[0, 1] <= 1e-12
            self.n_clusters_ = 1 if same else 2
            self.labels_ = np.array([0, 0] if same else [0, 1])
        else:
            model = CosineAgglomerative(n_clusters=1).fit(X)
            hi = min(n - 1, self.k_max)
            for k in range(2, hi + 1):
                self.silhouette_scores_[k] = silhouette_from_distances(model.distances_, model.labels_for(k))
            self.n_clusters_ = choose_k(self.silhouette_scores_, self.tolerance)
            self.labels_ = model.labels_for(self.n_clusters_)
        return self


def merge_clusters(
    symptom: Mapping[str, int], root_cause: Mapping[str, int], remediation: Mapping[str, int]
) -> dict[str, int]:
    """Join outages that share a cluster in any view; close transitively.

    Merged ids are numbered by the smallest outage_id in each component.
    """
    keys = sorted(symptom)
    if set(keys) != set(root_cause) or set(keys) != set(remediation):
        raise ValueError("label maps must cover the same outages")
    parent = {k: k for k in keys}

    def find(k: str) -> str:
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for view in (symptom, root_cause, remediation):
        first: dict[int, str] = {}
        for k in keys:
            lab = view[k]
            if lab in first:
                ra, rb = find(first[lab]), find(k)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
            else:
                first[lab] = k
    roots: dict[str, int] = {}
    return {k: roots.setdefault(find(k), len(roots)) for k in keys}


@dataclass
class ClusterAssignment:
    labels_symptom: dict[str, int]
    labels_root_cause: dict[str, int]
    labels_remediation: dict[str, int]
    merged: dict[str, int]

    @property
    def counts(self) -> dict[str, int]:
        return {
            "symptom": len(set(self.labels_symptom.values())),
            "root_cause": len(set(self.labels_root_cause.values())),
            "remediation": len(set(self.labels_remediation.values())),
            "merged": len(set(self.merged.values())),
        }

    def members(self, cluster_id: int) -> list[str]:
        return sorted(o for o, c in self.merged.items() if c == cluster_id)

    def to_dict(self) -> dict:
        return {
            "symptom": dict(sorted(self.labels_symptom.items())),
            "root_cause": dict(sorted(self.labels_root_cause.items())),
            "remediation": dict(sorted(self.labels_remediation.items())),
            "merged": dict(sorted(self.merged.items())),
            "counts": self.counts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterAssignment":
        conv = lambda m: {k: int(v) for k, v in m.items()}  # noqa: E731
        return cls(conv(d["symptom"]), conv(d["root_cause"]), conv(d["remediation"]), conv(d["merged"]))


def cluster_outages(kg: KnowledgeGraph, k_max: int = 150, tolerance: float = 0.05) -> ClusterAssignment:
    ids = kg.outage_ids
    views = {}
    for kind in NODE_KINDS:
        labels = SilhouetteAgglomerative(k_max=k_max, tolerance=tolerance).fit(kg.embeddings(kind)).labels_
        views[kind] = {o: int(lab) for o, lab in zip(ids, labels)}
    merged = merge_clusters(views["symptom"], views["root_cause"], views["remediation"])
    return ClusterAssignment(views["symptom"], views["root_cause"], views["remediation"], merged)
