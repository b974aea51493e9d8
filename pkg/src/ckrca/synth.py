"""Synthetic alert streams from noisy-OR DAGs and aligned templated outage reports.

Everything here is a pure function of the scenario and its seed, which is
what makes these corpora usable as ground truth.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from graphlib import TopologicalSorter
from pathlib import Path

import numpy as np
import yaml

from .ingestion import Alert, AlertLog, IndicatorMatrix, OutageReport, format_timestamp, parse_timestamp
from .ingestion import write_alert_log, write_outage_reports

DEFAULT_START = datetime(2021, 1, 1, tzinfo=timezone.utc)


@dataclass
class NodeSpec:
    alert_id: str
    title: str = ""
    service: str = "svc"
    severity: str = "warning"
    p_root: float = 0.0

    def __post_init__(self):
        self.title = self.title or self.alert_id.replace("_", " ")


@dataclass
class OutageTemplate:
    symptom: str
    root_cause: str
    remediation: str
    alerts: list[str]


@dataclass
class ScenarioSpec:
    nodes: list[NodeSpec]
    edges: list[tuple[str, str, float]] = field(default_factory=list)
    outage_templates: list[OutageTemplate] = field(default_factory=list)
    n_windows: int = 2880
    n_outages: int = 0
    duplicate_pairs: int = 0
    window_minutes: float = 15
    outage_windows: tuple[int, int] = (2, 4)
    pre_window_minutes: float = 60
    start: datetime = DEFAULT_START
    seed: int = 0

    def __post_init__(self):
        names = [n.alert_id for n in self.nodes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate node names")
        known = set(names)
        self.edges = [(str(a), str(b), float(p)) for a, b, p in self.edges]
        for a, b, p in self.edges:
            if a not in known or b not in known:
                raise ValueError(f"edge {a}->{b} references an unknown node")
            if not 0 <= p <= 1:
                raise ValueError(f"edge {a}->{b} probability {p} outside [0, 1]")
        for n in self.nodes:
            if not 0 <= n.p_root <= 1:
                raise ValueError(f"node {n.alert_id} p_root outside [0, 1]")
        for t in self.outage_templates:
            if not set(t.alerts) <= known:
                raise ValueError(f"template alerts {sorted(set(t.alerts) - known)} are not DAG nodes")
        if 2 * self.duplicate_pairs > self.n_outages:
            raise ValueError("too many duplicate pairs for n_outages")
        self.start = parse_timestamp(self.start)
        self.order()  # raises on cycles

    def order(self) -> list[str]:
        ts = TopologicalSorter({n.alert_id: set() for n in self.nodes})
        for a, b, _ in self.edges:
            ts.add(b, a)
        return list(ts.static_order())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start"] = format_timestamp(self.start)
        d["edges"] = [list(e) for e in self.edges]
        d["outage_windows"] = list(self.outage_windows)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        if "random" in d:
            opts = dict(d.pop("random"))
            opts.setdefault("seed", d.get("seed", 0))
            return random_scenario(**opts)
        d["nodes"] = [NodeSpec(**n) if isinstance(n, dict) else NodeSpec(str(n)) for n in d["nodes"]]
        d["edges"] = [tuple(e) for e in d.get("edges", [])]
        d["outage_templates"] = [OutageTemplate(**t) for t in d.get("outage_templates", [])]
        if "outage_windows" in d:
            d["outage_windows"] = tuple(d["outage_windows"])
        return cls(**d)


def load_scenario(path: str | Path) -> ScenarioSpec:
    return ScenarioSpec.from_dict(yaml.safe_load(Path(path).read_text(encoding="utf-8")))


def generate_alert_stream(spec: ScenarioSpec) -> tuple[AlertLog, IndicatorMatrix]:
    """Sample firings window by window; children fire by noisy-OR over fired parents."""
    rng = np.random.default_rng([spec.seed, 1])
    order = spec.order()
    col = {a: j for j, a in enumerate(sorted(n.alert_id for n in spec.nodes))}
    node = {n.alert_id: n for n in spec.nodes}
    parents: dict[str, list[tuple[str, float]]] = {a: [] for a in col}
    for a, b, p in spec.edges:
        parents[b].append((a, p))
    X = np.zeros((spec.n_windows, len(col)), dtype=np.uint8)
    for a in order:
        fail = np.full(spec.n_windows, 1.0 - node[a].p_root)
        for par, p in parents[a]:
            fail *= np.where(X[:, col[par]] == 1, 1.0 - p, 1.0)
        X[:, col[a]] = rng.random(spec.n_windows) < (1.0 - fail)
    width = timedelta(minutes=spec.window_minutes)
    windows = [spec.start + i * width for i in range(spec.n_windows)]
    offsets = rng.integers(0, int(width.total_seconds()), size=X.shape)
    ids = sorted(col)
    alerts = []
    for r, c in zip(*np.nonzero(X)):
        n = node[ids[c]]
        alerts.append(
            Alert(n.alert_id, n.title, n.service, n.severity, windows[r] + timedelta(seconds=int(offsets[r, c])))
        )
    return AlertLog(alerts), IndicatorMatrix(windows, ids, X, spec.window_minutes)


@dataclass
class SyntheticCorpus:
    log: AlertLog
    reports: list[OutageReport]
    truth: IndicatorMatrix
    alignment: dict[str, str]
    templates: dict[str, int]

    def twins(self) -> dict[str, str]:
        """Symmetric duplicate map: each planted duplicate and its source point at each other."""
        out = dict(self.alignment)
        out.update({v: k for k, v in self.alignment.items()})
        return out


def generate_outage_corpus(spec: ScenarioSpec) -> tuple[list[OutageReport], list[Alert], dict[str, str], dict[str, int]]:
    """Place outages in non-overlapping spans and fire each template's alerts inside them.

    Returns (reports, injected firings, alignment duplicate -> source, outage -> template index).
    """
    if spec.n_outages < 1:
        raise ValueError("n_outages must be >= 1")
    if not spec.outage_templates:
        raise ValueError("scenario has no outage templates")
    rng = np.random.default_rng([spec.seed, 2])
    width = timedelta(minutes=spec.window_minutes)
    n_distinct = spec.n_outages - spec.duplicate_pairs
    tmpl = [i % len(spec.outage_templates) for i in range(n_distinct)]
    tmpl += tmpl[: spec.duplicate_pairs]
    pre = int(np.ceil(spec.pre_window_minutes / spec.window_minutes)) + 1
    lo_d, hi_d = spec.outage_windows
    taken: list[tuple[int, int]] = []
    spans = []
    for _ in range(spec.n_outages):
        for _attempt in range(1000):
            dur = int(rng.integers(lo_d, hi_d + 1))
            w = int(rng.integers(pre, spec.n_windows - dur))
            span = (w - pre, w + dur + 1)
            if all(span[1] <= a or span[0] >= b for a, b in taken):
                break
        else:
            raise RuntimeError("could not place outages without collisions; increase n_windows")
        taken.append(span)
        spans.append((w, dur))
    node = {n.alert_id: n for n in spec.nodes}
    # order outage ids by time so ids carry no template information
    chrono = sorted(range(spec.n_outages), key=lambda i: spans[i][0])
    ids = {i: f"OUT-{rank:04d}" for rank, i in enumerate(chrono)}
    reports, injected, template_of = [], [], {}
    for i in range(spec.n_outages):
        w, dur = spans[i]
        t = spec.outage_templates[tmpl[i]]
        start = spec.start + w * width
        end = start + dur * width
        reports.append(OutageReport(ids[i], start, end, t.symptom, t.root_cause, t.remediation))
        template_of[ids[i]] = tmpl[i]
        for a in t.alerts:
            sec = int(rng.integers(0, int((end - start).total_seconds())))
            n = node[a]
            injected.append(Alert(a, n.title, n.service, "critical", start + timedelta(seconds=sec)))
    alignment = {ids[n_distinct + j]: ids[j] for j in range(spec.duplicate_pairs)}
    return sorted(reports, key=lambda r: r.outage_id), injected, alignment, template_of


def generate_corpus(spec: ScenarioSpec) -> SyntheticCorpus:
    log, truth = generate_alert_stream(spec)
    reports, injected, alignment, template_of = generate_outage_corpus(spec)
    return SyntheticCorpus(AlertLog(list(log) + injected), reports, truth, alignment, template_of)


_SERVICES = [
    "checkout", "payment", "login", "search", "catalog", "billing", "inventory", "gateway", "profile", "ledger",
]
_SIGNALS = [
    "latency high", "error rate", "timeouts", "5xx spike", "cpu saturation", "memory pressure", "disk full",
    "connection refused", "queue backlog", "pod restarts", "heap exhaustion", "thread starvation",
]
_CAUSES = [
    "misconfigured connection pool", "expired TLS certificate", "bad feature flag rollout", "database failover",
    "slow query plan regression", "exhausted file descriptors", "stale DNS cache", "runaway cron job",
    "version mismatch after deployment", "network partition between zones", "leaking goroutines",
    "throttled cloud API quota", "corrupted index shard", "oversized batch import", "clock skew on nodes",
]
_FIXES = [
    "rolled back the release", "restarted the affected pods", "raised the pool limit", "rotated the certificate",
    "disabled the feature flag", "rebuilt the index", "flushed the DNS cache", "scaled out the workers",
    "pinned the dependency version", "added a rate limiter", "failed over to the standby", "paused the import",
]


def random_scenario(
    n_services: int = 6,
    alerts_per_service: int = 8,
    n_templates: int = 25,
    n_outages: int = 30,
    duplicate_pairs: int = 5,
    n_windows: int = 2880,
    edge_prob: float = 0.15,
    cross_edge_prob: float = 0.01,
    alerts_per_outage: int = 3,
    background_rate: tuple[float, float] = (0.002, 0.008),
    seed: int = 0,
) -> ScenarioSpec:
    """A random sparse noisy-OR DAG over per-service alert pools, with templated outages.

    Each template belongs to one service: its triggering alerts come from that
    service's pool, its cause and fix from a small per-service vocabulary, and its
    symptom text names the triggering alert titles.
    """
    max_services = min(len(_SERVICES), len(_CAUSES) // 2, len(_FIXES) // 2)
    if not 1 <= n_services <= max_services:
        raise ValueError(f"n_services must be in [1, {max_services}]")
    if not 1 <= alerts_per_outage <= alerts_per_service <= len(_SIGNALS):
        raise ValueError("need 1 <= alerts_per_outage <= alerts_per_service <= number of signal names")
    rng = np.random.default_rng([seed, 0])
    nodes, pool = [], {}
    for s in range(n_services):
        svc = _SERVICES[s]
        signals = rng.choice(len(_SIGNALS), size=alerts_per_service, replace=False)
        pool[s] = []
        for sig in signals:
            n = NodeSpec(f"A{len(nodes):03d}", f"{svc} {_SIGNALS[int(sig)]}", f"{svc}-svc", "warning", 0.0)
            pool[s].append(len(nodes))
            nodes.append(n)
    svc_of = {i: s for s, members in pool.items() for i in members}
    edges = []
    for j in range(len(nodes)):
        for i in range(j):
            p = edge_prob if svc_of[i] == svc_of[j] else cross_edge_prob
            if rng.random() < p:
                edges.append((nodes[i].alert_id, nodes[j].alert_id, float(rng.uniform(0.4, 0.8))))
    has_parent = {b for _, b, _ in edges}
    for n in nodes:
        n.p_root = float(rng.uniform(*background_rate)) if n.alert_id not in has_parent else background_rate[0] / 2
    # disjoint cause and fix vocabularies per service
    cperm, fperm = rng.permutation(len(_CAUSES)), rng.permutation(len(_FIXES))
    causes = {s: cperm[2 * s: 2 * s + 2].tolist() for s in range(n_services)}
    fixes = {s: fperm[2 * s: 2 * s + 2].tolist() for s in range(n_services)}
    templates = []
    for t in range(n_templates):
        s = t % n_services
        svc = _SERVICES[s]
        picks = sorted(rng.choice(pool[s], size=alerts_per_outage, replace=False).tolist())
        titles = [nodes[p].title for p in picks]
        cause = _CAUSES[causes[s][int(rng.integers(2))]]
        fix = _FIXES[fixes[s][int(rng.integers(2))]]
        templates.append(
            OutageTemplate(
                symptom=f"Customers reported {', '.join(titles)}. Incident {t} impacted the {svc} service.",
                root_cause=f"The {svc} tier hit a {cause} (case {t}).",
                remediation=f"On-call {fix} for {svc} and verified recovery (runbook {t}).",
                alerts=[nodes[p].alert_id for p in picks],
            )
        )
    return ScenarioSpec(
        nodes=nodes, edges=edges, outage_templates=templates, n_windows=n_windows, n_outages=n_outages,
        duplicate_pairs=duplicate_pairs, seed=seed,
    )


def write_corpus(corpus: SyntheticCorpus, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"alerts": out / "alerts.jsonl", "reports": out / "reports", "alignment": out / "alignment.json"}
    write_alert_log(corpus.log, paths["alerts"])
    write_outage_reports(corpus.reports, paths["reports"])
    paths["alignment"].write_text(
        json.dumps({"duplicates": corpus.alignment, "templates": corpus.templates}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return paths
