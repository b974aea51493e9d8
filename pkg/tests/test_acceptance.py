"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""

import json
import random
import time

import numpy as np
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from ckrca import ckgraph
from ckrca.causal import ci_test_columns, discover
from ckrca.cli import main
from ckrca.evaluation import lcs_length, leave_one_out_eval, rouge_1, rouge_l
from ckrca.forest import TrainingSet, load_model, save_model, top_k_precision, train
from ckrca.inference import InferenceQuery, infer_path
from ckrca.knowledge import merge_clusters, select_optimal_k
from ckrca.pipeline import build_ck_graph, train_predictor
from ckrca.service import create_app
from ckrca.synth import generate_alert_stream

from .conftest import COLLIDER_TRUTH, collider_spec, make_ck, skeleton_f1
from .test_knowledge import _blobs, _components_oracle


@pytest.fixture
def verdict(capsys):
    def emit(number: int, name: str, ok: bool, detail: str = ""):
        with capsys.disabled():
            print(f"\n[criterion {number:>2}] {'PASS' if ok else 'FAIL'} {name}{': ' + detail if detail else ''}")
        assert ok, f"criterion {number} ({name}) failed: {detail}"

    return emit


def test_c01_path_score_figure(verdict):
    ck = make_ck(directed=[("alert1", "x"), ("x", "y")], caused=[("alert1", "rc1"), ("alert1", "rc2"), ("y", "rc1")])
    t0 = time.perf_counter()
    got = {r.outage_id: r.score for r in infer_path(ck, InferenceQuery({"alert1"}))}
    dt = time.perf_counter() - t0
    ok = abs(got.get("rc1", 0) - 0.75) <= 1e-12 and abs(got.get("rc2", 0) - 0.5) <= 1e-12 and dt < 1
    verdict(1, "path-score figure", ok, f"RC1={got.get('rc1')} RC2={got.get('rc2')} in {dt:.3f}s")


def test_c02_causal_recovery(verdict):
    details, ok = [], True
    for seed in (0, 1, 2):
        t0 = time.perf_counter()
        _, m = generate_alert_stream(collider_spec(seed))
        cpdag, _ = discover(m)
        dt = time.perf_counter() - t0
        found = {tuple(sorted(e)) for e in cpdag.directed_edges | cpdag.undirected_edges}
        f1 = skeleton_f1(found, COLLIDER_TRUTH)
        collider = {("a", "b"), ("c", "b")} <= cpdag.directed_edges
        ok &= f1 >= 0.9 and collider and dt < 30
        details.append(f"seed {seed}: F1={f1:.3f} collider={collider} {dt:.1f}s")
    verdict(2, "causal recovery", ok, "; ".join(details))


def test_c03_ci_calibration(verdict):
    false_dep = detected = 0
    for trial in range(200):
        rng = np.random.default_rng([trial, 3])
        x = (rng.random(10_000) < 0.5).astype(np.uint8)
        y = (rng.random(10_000) < 0.5).astype(np.uint8)
        false_dep += not ci_test_columns(x, y, alpha=0.05).independent
        detected += not ci_test_columns(x, x.copy(), alpha=0.05).independent
    rate = false_dep / 200
    verdict(3, "CI-test calibration", 0.01 <= rate <= 0.10 and detected == 200,
            f"false-dependence rate {rate:.3f}, y=x detected {detected}/200")


def test_c04_merge_oracle(verdict):
    bad = 0
    for trial in range(100):
        rng = np.random.default_rng([trial, 4])
        items = [f"o{i:02d}" for i in range(30)]
        views = [{o: int(rng.integers(0, rng.integers(2, 31))) for o in items} for _ in range(3)]
        groups: dict = {}
        for o, c in merge_clusters(*views).items():
            groups.setdefault(c, set()).add(o)
        bad += {frozenset(g) for g in groups.values()} != _components_oracle(*views)
    verdict(4, "cluster-merge oracle", bad == 0, f"{100 - bad}/100 trials exact")


def test_c05_k_selection(verdict):
    X, _ = _blobs(11, [[1, 0, 0], [0, 1, 0], [0, 0, 1]], per=8)
    got = {k_max: select_optimal_k(X, (2, k_max)) for k_max in (5, 10)}
    verdict(5, "K selection", all(v == 3 for v in got.values()), f"chosen K by k_max: {got}")


def test_c06_rouge(verdict):
    s = rouge_1("the cat", "the cat sat")
    ok = abs(s.precision - 1) <= 1e-9 and abs(s.recall - 2 / 3) <= 1e-9 and abs(s.f1 - 0.8) <= 1e-9
    ok &= lcs_length("a b c d e".split(), "a c e".split()) == 3
    ok &= rouge_1("x y z", "x y z").f1 == 1.0 and rouge_l("x y z", "x y z").f1 == 1.0
    rng = random.Random(6)
    swaps = 0
    for _ in range(100):
        a = " ".join(rng.choices("abcdefgh", k=rng.randint(1, 12)))
        b = " ".join(rng.choices("abcdefgh", k=rng.randint(1, 12)))
        swaps += all(abs(fn(a, b).precision - fn(b, a).recall) <= 1e-12 for fn in (rouge_1, rouge_l))
    verdict(6, "Rouge correctness", ok and swaps == 100, f"worked examples ok={ok}, swap identity {swaps}/100")


def _separable(n_classes, copies, seed):
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for c in range(n_classes):
        for _ in range(copies):
            key = np.zeros(n_classes, dtype=np.uint8)
            key[c] = 1
            rows.append(np.concatenate([key, (rng.random(8) < 0.3).astype(np.uint8)]))
            labels.append(c)
    names = [f"key{c}" for c in range(n_classes)] + [f"noise{j}" for j in range(8)]
    return TrainingSet(names, np.array(rows), np.array(labels), [f"o{i:03d}" for i in range(len(labels))])


def test_c07_predictor_sanity(verdict):
    details, ok = [], True
    for seed in range(5):
        model = train(_separable(6, 4, seed), seed=seed)
        held_out = _separable(6, 2, seed + 100)
        top1 = top_k_precision(model, held_out, 1)
        curve = [top_k_precision(model, held_out, k) for k in range(1, 7)]
        mono = all(a <= b for a, b in zip(curve, curve[1:]))
        ok &= top1 == 1.0 and mono
        details.append(f"top1={top1:.2f} monotone={mono}")
    verdict(7, "predictor sanity", ok, "; ".join(details))


def test_c08_end_to_end_retrieval(verdict, corpus):
    t0 = time.perf_counter()
    rep = leave_one_out_eval(corpus, "clust", top_k=5, sample=50, seed=0)  # LeakageError would propagate
    dt = time.perf_counter() - t0
    twins = corpus.twins()
    entries = {e["outage_id"]: e for e in rep.entries}
    misses = [o for o in sorted(twins) if entries[o]["scores"]["root_cause"]["rouge1"]["f1"] != 1.0
              or twins[o] not in entries[o]["predicted"]]
    ok = len(corpus.reports) == 30 and len(corpus.alignment) == 5 and not misses and dt < 120
    verdict(8, "end-to-end retrieval", ok, f"{len(twins) - len(misses)}/{len(twins)} duplicates retrieved, {dt:.1f}s")


def _stage_bytes(corpus, tmp):
    ck, _ = build_ck_graph(corpus.log, corpus.reports)
    ckgraph.save(ck, tmp / "g.json")
    save_model(train_predictor(ck, corpus.log, corpus.reports), tmp / "m.json")
    rep = leave_one_out_eval(corpus, "clust", sample=3, seed=5)
    return {
        "graph": (tmp / "g.json").read_bytes(),
        "model": (tmp / "m.json").read_bytes(),
        "report": rep.to_json().encode(),
    }


def test_c09_determinism(verdict, tmp_path):
    from ckrca.synth import generate_corpus, random_scenario, write_corpus

    runs = []
    for i in range(2):
        d = tmp_path / f"run{i}"
        c = generate_corpus(random_scenario(seed=0))
        paths = write_corpus(c, d / "corpus")
        files = {"alerts": paths["alerts"].read_bytes(), "alignment": paths["alignment"].read_bytes()}
        files.update({f"report/{p.name}": p.read_bytes() for p in sorted(paths["reports"].iterdir())})
        files.update(_stage_bytes(c, d))
        runs.append(files)
    diff = sorted(k for k in runs[0].keys() | runs[1].keys() if runs[0].get(k) != runs[1].get(k))
    verdict(9, "determinism", not diff, f"{len(runs[0])} artifacts compared, differing: {diff or 'none'}")


def test_c10_round_trip(verdict, corpus, tmp_path):
    ck, _ = build_ck_graph(corpus.log, corpus.reports)
    model = train_predictor(ck, corpus.log, corpus.reports)
    ckgraph.save(ck, tmp_path / "g.json")
    save_model(model, tmp_path / "m.json")
    ck2, model2 = ckgraph.load(tmp_path / "g.json"), load_model(tmp_path / "m.json")
    probes = (np.random.default_rng(10).random((200, model.n_features_in_)) < 0.3).astype(np.uint8)
    graph_ok = ckgraph.graphs_equal(ck, ck2, atol=1e-12)
    model_ok = model2.to_dict() == model.to_dict() and np.array_equal(model.predict_proba(probes), model2.predict_proba(probes))
    verdict(10, "round-trip", graph_ok and model_ok, f"graph equal={graph_ok}, model equal={model_ok}")


def test_c11_cli_service_parity(verdict, artifacts):
    ck = ckgraph.load(artifacts / "graph.json")
    known = sorted(ck.alert_titles)
    client = TestClient(create_app(artifacts / "graph.json", artifacts / "model.json"))
    runner = CliRunner()
    rng = random.Random(11)
    agree = 0
    for i in range(20):
        ids = rng.sample(known, rng.randint(1, 5)) + (["unknown-alert"] if i % 5 == 0 else [])
        method = rng.choice(["path", "sim", "clust"])
        k, L, top_n = rng.randint(1, 9), rng.randint(1, 3), rng.randint(1, 5)
        body = {"alert_ids": ids, "method": method, "k": k, "L": L, "top_n": top_n}
        http = client.post("/v1/infer", json=body)
        cli = runner.invoke(main, [
            "infer", "--graph", str(artifacts / "graph.json"), "--model", str(artifacts / "model.json"),
            "--alerts", ",".join(ids), "--method", method, "--k", str(k), "--L", str(L), "--top-n", str(top_n),
        ])
        agree += http.status_code == 200 and cli.exit_code == 0 and http.content == cli.output.encode()
        json.loads(http.content)
    verdict(11, "CLI/service parity", agree == 20, f"{agree}/20 queries byte-identical")
