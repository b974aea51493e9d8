from datetime import datetime, timedelta, timezone

import pytest

from ckrca.ingestion import Alert, OutageReport
from ckrca.synth import generate_corpus, random_scenario

T0 = datetime(2022, 3, 1, 10, 0, tzinfo=timezone.utc)


def at(minutes: float) -> datetime:
    return T0 + timedelta(minutes=minutes)


def alert(aid: str, minutes: float, title: str | None = None) -> Alert:
    return Alert(aid, title or f"{aid} title", "svc", "warning", at(minutes))


def outage(oid: str, start: float, end: float, sym="disk full on db", rc="bad config", rem="rolled back") -> OutageReport:
    return OutageReport(oid, at(start), at(end), sym, rc, rem)


@pytest.fixture(scope="session")
def corpus():
    """The 30-outage, 5-duplicate-pair synthetic corpus shared by the end-to-end tests."""
    return generate_corpus(random_scenario(seed=0))


def collider_spec(seed: int, n_windows: int = 10_000):
    """Five-node noisy-OR DAG a -> b <- c, b -> d -> e."""
    from ckrca.synth import NodeSpec, ScenarioSpec

    nodes = [NodeSpec("a", p_root=0.3), NodeSpec("b", p_root=0.05), NodeSpec("c", p_root=0.3),
             NodeSpec("d", p_root=0.05), NodeSpec("e", p_root=0.05)]
    edges = [("a", "b", 0.8), ("c", "b", 0.8), ("b", "d", 0.8), ("d", "e", 0.8)]
    return ScenarioSpec(nodes=nodes, edges=edges, n_windows=n_windows, seed=seed)


COLLIDER_TRUTH = {("a", "b"), ("b", "c"), ("b", "d"), ("d", "e")}


def skeleton_f1(found: set, truth: set) -> float:
    tp = len(found & truth)
    if tp == 0:
        return 0.0
    p, r = tp / len(found), tp / len(truth)
    return 2 * p * r / (p + r)


def make_ck(directed=(), undirected=(), caused=(), nodes=None, clusters=None, outage_texts=None):
    """Hand-built CK graph; outages are created for every outage id named in ``caused``."""
    from ckrca.causal import Cpdag
    from ckrca.ckgraph import CkGraph
    from ckrca.knowledge import build_kg

    names = set(nodes or ())
    for a, b in list(directed) + list(undirected):
        names |= {a, b}
    names |= {a for a, _ in caused}
    oids = sorted({o for _, o in caused} | set(outage_texts or {}))
    texts = outage_texts or {}
    reps = [
        outage(o, 100 * i, 100 * i + 30, *texts.get(o, (f"symptom of {o}", f"cause of {o}", f"fix for {o}")))
        for i, o in enumerate(oids)
    ]
    kg = build_kg(reps)
    titles = {a: f"{a} title" for a in names}
    return CkGraph(Cpdag(sorted(names), set(directed), set(undirected)), kg, clusters, set(caused), titles)


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    """Synthetic corpus written to disk, then graph and model built through the CLI."""
    from click.testing import CliRunner

    from ckrca.cli import main

    d = tmp_path_factory.mktemp("artifacts")
    runner = CliRunner()
    for args in (
        ["synth", "--out", str(d / "corpus"), "--seed", "0"],
        ["build", "--alert-log", str(d / "corpus" / "alerts.jsonl"), "--reports", str(d / "corpus" / "reports"),
         "--out", str(d / "graph.json")],
        ["train", "--alert-log", str(d / "corpus" / "alerts.jsonl"), "--reports", str(d / "corpus" / "reports"),
         "--graph", str(d / "graph.json"), "--out", str(d / "model.json")],
    ):
        res = runner.invoke(main, args)
        assert res.exit_code == 0, res.output
    return d
