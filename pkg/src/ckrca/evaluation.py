"""Rouge metrics, the Incident Search baseline, and leave-one-out evaluation."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from datetime import timedelta
from typing import Sequence

import numpy as np

from .ckgraph import dumps
from .config import Settings
from .ingestion import AlertLog, OutageReport, alerts_in_outage_window
from .inference import Recommendation
from .knowledge import KnowledgeGraph
from .pipeline import RootCauseRecommender
from .text import Embedder, HashingEmbedder, LeadSummarizer, Summarizer, build_embedder, build_summarizer, tokenize

logger = logging.getLogger(__name__)

EVAL_METHODS = ("path", "sim", "clust", "incident_search")


class LeakageError(AssertionError):
    pass


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float
    variant: str

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def _score(overlap: int, n_cand: int, n_ref: int, variant: str) -> RougeScore:
    p = overlap / n_cand if n_cand else 0.0
    r = overlap / n_ref if n_ref else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return RougeScore(p, r, f, variant)


def rouge_1(candidate: str, reference: str) -> RougeScore:
    c, r = tokenize(candidate), tokenize(reference)
    overlap = sum((Counter(c) & Counter(r)).values())
    return _score(overlap, len(c), len(r), "rouge1")


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    c, r = tokenize(candidate), tokenize(reference)
    return _score(lcs_length(c, r), len(c), len(r), "rougeL")


def incident_search_baseline(
    kg: KnowledgeGraph,
    held_out_symptom: str,
    top_k: int = 5,
    embedder: Embedder | None = None,
    summarizer: Summarizer | None = None,
) -> list[Recommendation]:
    """Nearest stored symptoms to a symptom text, by cosine."""
    if not kg.outages:
        raise ValueError("empty corpus")
    embedder = embedder or HashingEmbedder()
    summarizer = summarizer or LeadSummarizer()
    q = np.asarray(embedder.embed_text(summarizer.summarize(held_out_symptom).text).values)
    qn = np.linalg.norm(q)
    scored = {}
    for oid in kg.outage_ids:
        s = kg.outages[oid].symptom.embedding
        sn = np.linalg.norm(s)
        scored[oid] = 0.0 if qn == 0 or sn == 0 else round(float(np.clip(q @ s / (qn * sn), -1, 1)), 12)
    ranked = sorted(scored.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]
    return [
        Recommendation(oid, kg.outages[oid].root_cause.summary, kg.outages[oid].remediation.summary, sc, i,
                       "incident_search")
        for i, (oid, sc) in enumerate(ranked, start=1)
    ]


def best_scores(recs: Sequence[Recommendation], truth_rc: str, truth_rem: str) -> dict:
    """Max F1 over the recommendations, per target and Rouge variant."""
    out = {}
    for target, attr, truth in (("root_cause", "root_cause_summary", truth_rc), ("remediation", "remediation_summary", truth_rem)):
        out[target] = {}
        for name, fn in (("rouge1", rouge_1), ("rougeL", rouge_l)):
            best = RougeScore(0.0, 0.0, 0.0, name)
            for r in recs:
                s = fn(getattr(r, attr), truth)
                if s.f1 > best.f1:
                    best = s
            out[target][name] = best.to_dict()
    return out


@dataclass
class EvalReport:
    method: str
    top_k: int
    seed: int
    entries: list[dict] = field(default_factory=list)

    @property
    def sample_size(self) -> int:
        return len(self.entries)

    def averages(self) -> dict:
        out: dict = {}
        for target in ("root_cause", "remediation"):
            out[target] = {}
            for variant in ("rouge1", "rougeL"):
                out[target][variant] = {
                    stat: float(np.mean([e["scores"][target][variant][stat] for e in self.entries])) if self.entries else 0.0
                    for stat in ("precision", "recall", "f1")
                }
        return out

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "top_k": self.top_k,
            "seed": self.seed,
            "sample_size": self.sample_size,
            "averages": self.averages(),
            "entries": self.entries,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def to_table(self) -> str:
        avg = self.averages()
        lines = [
            f"method={self.method} top_k={self.top_k} n={self.sample_size} seed={self.seed}",
            f"{'target':<12} {'metric':<8} {'P':>7} {'R':>7} {'F1':>7}",
        ]
        for target in ("root_cause", "remediation"):
            for variant in ("rouge1", "rougeL"):
                s = avg[target][variant]
                lines.append(f"{target:<12} {variant:<8} {s['precision']:7.3f} {s['recall']:7.3f} {s['f1']:7.3f}")
        return "\n".join(lines)


def _check_no_leak(est: RootCauseRecommender | None, kg: KnowledgeGraph, o: OutageReport, span, fold_log: AlertLog):
    if o.outage_id in kg.outages:
        raise LeakageError(f"held-out outage {o.outage_id} is present in the rebuilt graph")
    if fold_log.between(*span):
        raise LeakageError(f"alerts inside the held-out window of {o.outage_id} remain in the fold log")
    if est is None:
        return
    ck = est.ck_graph_
    if any(oid == o.outage_id for _a, oid in ck.caused_outage_edges):
        raise LeakageError(f"caused-outage edge into held-out outage {o.outage_id}")
    width = timedelta(minutes=est.matrix_.window_minutes)
    for w in est.matrix_.window_start_times:
        if w + width > span[0] and w <= span[1]:
            raise LeakageError(f"matrix row {w} overlaps the held-out window of {o.outage_id}")


def _unpack(corpus) -> tuple[AlertLog, list[OutageReport]]:
    if hasattr(corpus, "log") and hasattr(corpus, "reports"):
        return corpus.log, list(corpus.reports)
    log, reports = corpus
    return log, list(reports)


def leave_one_out_eval(
    corpus,
    method: str = "clust",
    top_k: int = 5,
    sample: int = 50,
    seed: int = 0,
    settings: Settings | None = None,
) -> EvalReport:
    """Hold out each sampled outage, rebuild everything without it, and score the top-k retrievals."""
    if method not in EVAL_METHODS:
        raise ValueError(f"unknown method {method!r}")
    log, reports = _unpack(corpus)
    if len(reports) < 2:
        raise ValueError("leave-one-out needs at least two outages")
    settings = (settings or Settings()).model_copy(update={"top_n": top_k})
    reports = sorted(reports, key=lambda r: r.outage_id)
    rng = np.random.default_rng(seed)
    if sample >= len(reports):
        chosen = list(range(len(reports)))
    else:
        chosen = sorted(rng.choice(len(reports), size=sample, replace=False).tolist())
    summarizer = build_summarizer(settings.summary.as_provider_config())
    embedder = build_embedder(settings.embedding.as_provider_config())
    pre = timedelta(minutes=settings.pre_window_minutes)
    titles = log.titles()
    kg_cache: dict = {}
    report = EvalReport(method, top_k, seed)

    for i in chosen:
        o = reports[i]
        span = (o.start_time - pre, o.resolution_time)
        fold_log = log.without_interval(*span)
        fold_reports = [r for r in reports if r.outage_id != o.outage_id]
        truth_rc = summarizer.summarize(o.root_cause_text).text
        truth_rem = summarizer.summarize(o.remediation_text).text
        fired = sorted(alerts_in_outage_window(log, o, pre))
        entry = {"outage_id": o.outage_id, "fired_alerts": len(fired), "flags": [], "predicted": []}

        if method == "incident_search":
            from .pipeline import _cached_kg

            kg = _cached_kg(fold_reports, summarizer, embedder, kg_cache)
            _check_no_leak(None, kg, o, span, fold_log)
            recs = incident_search_baseline(kg, o.symptom_text, top_k, embedder, summarizer)
        else:
            est = RootCauseRecommender.from_settings(settings, method)
            est.fit(fold_log, fold_reports, exclude=span, kg_cache=kg_cache)
            _check_no_leak(est, est.ck_graph_.kg, o, span, fold_log)
            if not fired:
                entry["flags"].append("no_fired_alerts")
                recs = []
            else:
                res = est.query(fired, [titles.get(a, a) for a in fired])
                recs = res.recommendations
                entry["flags"].extend(res.flags)
                if res.reason:
                    entry["flags"].append(res.reason)
        entry["predicted"] = [r.outage_id for r in recs]
        entry["scores"] = best_scores(recs, truth_rc, truth_rem)
        report.entries.append(entry)
    return report
