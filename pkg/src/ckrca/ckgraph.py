"""The merged causal + knowledge (CK) graph: caused-outage linking, traversal, storage."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .causal import Cpdag
from .ingestion import DEFAULT_PRE_WINDOW, AlertLog, OutageReport, alerts_in_outage_window
from .knowledge import ClusterAssignment, KnowledgeGraph

logger = logging.getLogger(__name__)

GRAPH_FORMAT_VERSION = 1


class GraphFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SymptomReach:
    outage_id: str
    path_length: int
    count: int


@dataclass
class CkGraph:
    cpdag: Cpdag
    kg: KnowledgeGraph
    clusters: ClusterAssignment | None = None
    caused_outage_edges: set[tuple[str, str]] = field(default_factory=set)
    alert_titles: dict[str, str] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        nodes = set(self.cpdag.nodes)
        for a, o in self.caused_outage_edges:
            if a not in nodes:
                raise ValueError(f"caused_outage edge from unknown alert {a}")
            if o not in self.kg.outages:
                raise ValueError(f"caused_outage edge to unknown outage {o}")
        self._succ = self.cpdag.successors()
        symptoms: dict[str, list[str]] = {}
        for a, o in sorted(self.caused_outage_edges):
            symptoms.setdefault(a, []).append(o)
        self._symptoms = symptoms

    def symptoms_of(self, alert_id: str) -> list[str]:
        """Outage ids whose symptom node this alert links to."""
        return self._symptoms.get(alert_id, [])

    def successors(self, alert_id: str) -> list[str]:
        return self._succ.get(alert_id, [])

    def has_alert(self, alert_id: str) -> bool:
        return alert_id in self._succ

    def title_of(self, alert_id: str) -> str:
        return self.alert_titles.get(alert_id, alert_id)

    def cluster_of(self, outage_id: str) -> int | None:
        return None if self.clusters is None else self.clusters.merged.get(outage_id)

    def summary(self) -> dict:
        return {
            "alert_nodes": len(self.cpdag.nodes),
            "directed_edges": len(self.cpdag.directed_edges),
            "undirected_edges": len(self.cpdag.undirected_edges),
            "outages": len(self.kg.outages),
            "kg_nodes": len(self.kg.nodes),
            "kg_edges": len(self.kg.edges),
            "caused_outage_edges": len(self.caused_outage_edges),
            "clusters": self.clusters.counts if self.clusters else {},
        }

    def to_dict(self) -> dict:
        return {
            "version": GRAPH_FORMAT_VERSION,
            "metadata": self.metadata,
            "cpdag": self.cpdag.to_dict(),
            "kg": self.kg.to_dict(),
            "clusters": self.clusters.to_dict() if self.clusters else None,
            "caused_outage": [{"alert_id": a, "symptom": f"symptom:{o}"} for a, o in sorted(self.caused_outage_edges)],
            "alert_titles": dict(sorted(self.alert_titles.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CkGraph":
        if not isinstance(d, dict) or "version" not in d:
            raise GraphFormatError("not a CK graph document")
        if d["version"] != GRAPH_FORMAT_VERSION:
            raise GraphFormatError(f"unsupported graph version {d['version']} (expected {GRAPH_FORMAT_VERSION})")
        try:
            edges = set()
            for e in d["caused_outage"]:
                sym = e["symptom"]
                edges.add((e["alert_id"], sym.split(":", 1)[1] if sym.startswith("symptom:") else sym))
            return cls(
                cpdag=Cpdag.from_dict(d["cpdag"]),
                kg=KnowledgeGraph.from_dict(d["kg"]),
                clusters=ClusterAssignment.from_dict(d["clusters"]) if d.get("clusters") else None,
                caused_outage_edges=edges,
                alert_titles=dict(d.get("alert_titles", {})),
                metadata=dict(d.get("metadata", {})),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise GraphFormatError(f"corrupted graph document: {exc!r}") from None


def link_alerts_to_symptoms(
    cpdag: Cpdag,
    kg: KnowledgeGraph,
    log: AlertLog,
    reports: Sequence[OutageReport],
    pre_window: timedelta = DEFAULT_PRE_WINDOW,
    clusters: ClusterAssignment | None = None,
    metadata: dict | None = None,
) -> CkGraph:
    """Add a caused-outage edge from every alert active around an outage to its symptom node."""
    nodes = set(cpdag.nodes)
    edges = set()
    missing = set()
    for o in reports:
        if o.outage_id not in kg.outages:
            raise ValueError(f"outage {o.outage_id} is not in the knowledge graph")
        for a in alerts_in_outage_window(log, o, pre_window):
            if a in nodes:
                edges.add((a, o.outage_id))
            else:
                missing.add(a)
    if missing:
        logger.warning("%d alerts near outages are absent from the causal graph and were skipped", len(missing))
    titles = {a: t for a, t in log.titles().items()}
    return CkGraph(cpdag, kg, clusters, edges, titles, dict(metadata or {}))


def paths_from(ck: CkGraph, start: str, k: int) -> Counter:
    """Count simple paths from ``start`` ending in one caused-outage hop, by (outage_id, length).

    Alert-to-alert hops follow directed edges forward and undirected edges
    either way; the final caused-outage hop counts toward the length.
    """
    counts: Counter = Counter()
    if k < 1 or not ck.has_alert(start):
        return counts
    on_path = {start}

    def walk(node: str, depth: int) -> None:
        for o in ck.symptoms_of(node):
            counts[(o, depth + 1)] += 1
        if depth + 1 >= k:
            return
        for nxt in ck.successors(node):
            if nxt in on_path:
                continue
            on_path.add(nxt)
            walk(nxt, depth + 1)
            on_path.discard(nxt)

    walk(start, 0)
    return counts


def traverse_to_symptoms(ck: CkGraph, fired: Iterable[str], k: int = 9) -> list[SymptomReach]:
    """All symptom nodes reachable within k hops from the fired alerts, with path multiplicities."""
    if k < 1:
        raise ValueError("k must be >= 1")
    fired = sorted(set(fired))
    known = [a for a in fired if ck.has_alert(a)]
    if len(known) < len(fired):
        logger.warning("skipping %d fired alerts absent from the graph", len(fired) - len(known))
    total: Counter = Counter()
    for a in known:
        total.update(paths_from(ck, a, k))
    return [SymptomReach(o, length, c) for (o, length), c in sorted(total.items())]


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, default=_json_default) + "\n"


def save(ck: CkGraph, path: str | Path) -> None:
    Path(path).write_text(dumps(ck.to_dict()), encoding="utf-8")


def load(path: str | Path) -> CkGraph:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"corrupted graph file {path}: {exc.msg}") from None
    return CkGraph.from_dict(doc)


def graphs_equal(a: CkGraph, b: CkGraph, atol: float = 1e-12) -> bool:
    """Structural equality with embeddings compared to ``atol``."""
    da, db = a.to_dict(), b.to_dict()
    na, nb = da["kg"].pop("nodes"), db["kg"].pop("nodes")
    if da != db or len(na) != len(nb):
        return False
    for x, y in zip(na, nb):
        ex, ey = np.asarray(x.pop("embedding")), np.asarray(y.pop("embedding"))
        if x != y or ex.shape != ey.shape or not np.allclose(ex, ey, rtol=0, atol=atol):
            return False
    return True
