import json
from datetime import timedelta

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckrca import ckgraph
from ckrca.causal import Cpdag
from ckrca.ckgraph import CkGraph, GraphFormatError, graphs_equal, link_alerts_to_symptoms, paths_from, traverse_to_symptoms
from ckrca.ingestion import AlertLog
from ckrca.knowledge import build_kg
from ckrca.pipeline import build_ck_graph

from .conftest import alert, make_ck, outage


def test_four_overlapping_alerts():
    log = AlertLog([alert(a, m) for a, m in [("a", -10), ("b", 0), ("c", 5), ("d", 29), ("e", 200)]])
    o = outage("o1", 0, 30)
    ck = link_alerts_to_symptoms(Cpdag(list("abcde")), build_kg([o]), log, [o])
    assert ck.caused_outage_edges == {(x, "o1") for x in "abcd"}


def test_alert_overlapping_two_outages():
    log = AlertLog([alert("a", 50)])
    reps = [outage("o1", 0, 60), outage("o2", 100, 130)]
    ck = link_alerts_to_symptoms(Cpdag(["a"]), build_kg(reps), log, reps)
    assert ck.symptoms_of("a") == ["o1", "o2"]


def test_alerts_missing_from_cpdag_are_skipped():
    log = AlertLog([alert("a", 0), alert("ghost", 1)])
    o = outage("o1", 0, 30)
    ck = link_alerts_to_symptoms(Cpdag(["a"]), build_kg([o]), log, [o])
    assert ck.caused_outage_edges == {("a", "o1")}


def test_corpus_edges_match_interval_scan(corpus):
    ck, _ = build_ck_graph(corpus.log, corpus.reports)
    pre = timedelta(hours=1)
    expected = {
        (a.alert_id, o.outage_id)
        for o in corpus.reports
        for a in corpus.log
        if o.start_time - pre <= a.fired_at <= o.resolution_time and a.alert_id in ck.cpdag.nodes
    }
    assert ck.caused_outage_edges == expected
    for a, o in ck.caused_outage_edges:
        assert ck.cluster_of(o) is not None


def test_direct_edge_is_length_one():
    ck = make_ck(caused=[("a", "o1")])
    assert traverse_to_symptoms(ck, {"a"}) == [ckgraph.SymptomReach("o1", 1, 1)]


def figure_graph():
    # Alert1 links straight to both symptoms and reaches RC1's symptom again via x -> y
    return make_ck(
        directed=[("alert1", "x"), ("x", "y")],
        caused=[("alert1", "rc1"), ("alert1", "rc2"), ("y", "rc1")],
    )


def test_figure_paths():
    reach = traverse_to_symptoms(figure_graph(), {"alert1"})
    assert [(r.outage_id, r.path_length + 1, r.count) for r in reach] == [("rc1", 2, 1), ("rc1", 4, 1), ("rc2", 2, 1)]


def test_k_limits_length():
    ck = figure_graph()
    assert {(r.outage_id, r.path_length) for r in traverse_to_symptoms(ck, {"alert1"}, k=2)} == {("rc1", 1), ("rc2", 1)}
    with pytest.raises(ValueError):
        traverse_to_symptoms(ck, {"alert1"}, k=0)


def test_undirected_edges_traversed_both_ways():
    ck = make_ck(undirected=[("a", "b")], caused=[("a", "o1"), ("b", "o2")])
    assert paths_from(ck, "a", 9)[("o2", 2)] == 1
    assert paths_from(ck, "b", 9)[("o1", 2)] == 1


def test_unknown_fired_alerts_ignored():
    assert traverse_to_symptoms(figure_graph(), {"nope"}) == []


def _oracle_paths(ck: CkGraph, start: str, k: int):
    G = nx.DiGraph()
    G.add_nodes_from(ck.cpdag.nodes)
    G.add_edges_from(ck.cpdag.directed_edges)
    for a, b in ck.cpdag.undirected_edges:
        G.add_edge(a, b)
        G.add_edge(b, a)
    for a, o in ck.caused_outage_edges:
        G.add_edge(a, ("S", o))
    out = {}
    for o in ck.kg.outage_ids:
        for p in nx.all_simple_paths(G, start, ("S", o), cutoff=k):
            key = (o, len(p) - 1)
            out[key] = out.get(key, 0) + 1
    return out


@st.composite
def random_ck(draw):
    n = draw(st.integers(2, 7))
    names = [f"a{i}" for i in range(n)]
    order = draw(st.permutations(names))
    directed, undirected = set(), set()
    for i in range(n):
        for j in range(i + 1, n):
            kind = draw(st.sampled_from(["none", "none", "dir", "und"]))
            if kind == "dir":
                directed.add((order[i], order[j]))
            elif kind == "und":
                undirected.add(tuple(sorted((order[i], order[j]))))
    caused = {(a, o) for a in names for o in ("o1", "o2", "o3") if draw(st.integers(0, 3)) == 0}
    caused.add((names[0], "o1"))
    return make_ck(directed, undirected, caused, nodes=names), draw(st.integers(1, 9))


@settings(max_examples=60, deadline=None)
@given(random_ck())
def test_path_counts_match_dfs_oracle(case):
    ck, k = case
    for a in ck.cpdag.nodes:
        assert dict(paths_from(ck, a, k)) == _oracle_paths(ck, a, k)


def test_round_trip_empty(tmp_path):
    ck = make_ck(nodes=["a"], outage_texts={"o1": ("s", "r", "m")})
    ckgraph.save(ck, tmp_path / "g.json")
    assert graphs_equal(ckgraph.load(tmp_path / "g.json"), ck)


def test_round_trip_fifty_outages(tmp_path):
    from ckrca.synth import generate_corpus, random_scenario

    c = generate_corpus(random_scenario(n_outages=50, n_templates=40, duplicate_pairs=5, seed=3))
    ck, _ = build_ck_graph(c.log, c.reports)
    ckgraph.save(ck, tmp_path / "g.json")
    back = ckgraph.load(tmp_path / "g.json")
    assert graphs_equal(back, ck)
    assert back.summary() == ck.summary()
    ckgraph.save(back, tmp_path / "g2.json")
    assert (tmp_path / "g.json").read_bytes() == (tmp_path / "g2.json").read_bytes()


def test_graphs_equal_detects_embedding_change():
    ck = make_ck(caused=[("a", "o1")])
    other = CkGraph.from_dict(json.loads(ckgraph.dumps(ck.to_dict())))
    other.kg.outages["o1"].symptom.embedding = other.kg.outages["o1"].symptom.embedding + 1e-9
    assert not graphs_equal(ck, other)


def test_wrong_version(tmp_path):
    doc = make_ck(caused=[("a", "o1")]).to_dict()
    doc["version"] = 99
    (tmp_path / "g.json").write_text(json.dumps(doc))
    with pytest.raises(GraphFormatError, match="version"):
        ckgraph.load(tmp_path / "g.json")


def test_corrupted_file(tmp_path):
    (tmp_path / "g.json").write_text("{not json")
    with pytest.raises(GraphFormatError):
        ckgraph.load(tmp_path / "g.json")


def test_invalid_edges_rejected():
    ck = make_ck(caused=[("a", "o1")])
    with pytest.raises(ValueError):
        CkGraph(ck.cpdag, ck.kg, None, {("zzz", "o1")})
    with pytest.raises(ValueError):
        CkGraph(ck.cpdag, ck.kg, None, {("a", "nope")})
