import threading

import httpx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.utils import murmurhash3_32

from ckrca.text import (
    ExternalProvider,
    HashingEmbedder,
    LeadSummarizer,
    ProviderError,
    build_embedder,
    build_summarizer,
    cosine_distance_matrix,
    cosine_similarity,
    embed_alert_set,
    embed_text,
    summarize,
)


def _oracle_embedding(text: str, dim: int = 256) -> np.ndarray:
    import re

    v = np.zeros(dim)
    toks = [t.lower() for t in re.findall(r"[A-Za-z0-9]+", text)]
    for tok in toks:
        h = murmurhash3_32(tok, seed=0, positive=False)
        v[abs(h) % dim] += 1.0 if h >= 0 else -1.0
    v /= len(toks)
    return v / np.linalg.norm(v)


def test_lead_summary_single_sentence():
    assert summarize("Database went read-only.").text == "Database went read-only."


def test_lead_summary_first_three():
    text = "One. Two! Three? Four. Five."
    assert summarize(text).text == "One. Two! Three?"


def test_summary_strips_markup():
    assert summarize("## \n- Disk filled up.\n---\n* Pager fired.").text == "Disk filled up. Pager fired."


def test_summary_token_cap():
    out = LeadSummarizer(max_sentences=3, max_tokens=4).summarize("a b c d e f g.")
    assert out.text == "a b c d"


def _stub(handler):
    return httpx.MockTransport(handler)


def test_external_summary_verbatim():
    prov = ExternalProvider("http://stub", transport=_stub(lambda r: httpx.Response(200, json={"summary": "DB overload"})))
    out = prov.summarize("Anything at all. More text.")
    assert out.text == "DB overload" and out.provider == "external" and not out.fallback


def test_external_summary_falls_back():
    prov = ExternalProvider("http://stub", transport=_stub(lambda r: httpx.Response(503)))
    out = prov.summarize("First. Second. Third. Fourth.")
    assert out.fallback and out.text == "First. Second. Third."


def test_external_embed_protocol_and_normalization():
    seen = []

    def handler(req):
        seen.append((req.url.path, req.read()))
        return httpx.Response(200, json={"vectors": [[3.0, 4.0, 0.0]]})

    prov = ExternalProvider("http://stub", dim=3, transport=_stub(handler))
    v = prov.embed_text("hello")
    assert seen[0][0] == "/v1/embed" and b'"texts"' in seen[0][1]
    assert np.allclose(v.values, [0.6, 0.8, 0.0])


def test_external_embed_dimension_mismatch():
    prov = ExternalProvider("http://stub", dim=4, transport=_stub(lambda r: httpx.Response(200, json={"vectors": [[1.0]]})))
    with pytest.raises(ProviderError, match="dimension"):
        prov.embed_text("x")


def test_external_embed_error_is_not_masked():
    prov = ExternalProvider("http://stub", transport=_stub(lambda r: httpx.Response(500)))
    with pytest.raises(ProviderError):
        prov.embed_text("x")


def test_external_bounds_in_flight():
    lock = threading.Lock()
    state = {"now": 0, "peak": 0}
    gate = threading.Event()

    def handler(req):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        gate.wait(0.05)
        with lock:
            state["now"] -= 1
        return httpx.Response(200, json={"summary": "ok"})

    prov = ExternalProvider("http://stub", max_in_flight=2, transport=_stub(handler))
    threads = [threading.Thread(target=prov.summarize, args=("x",)) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert 1 <= state["peak"] <= 2


@pytest.mark.parametrize("text", ["db error", "Disk full on node-7, replica lag 30s", "x"])
def test_hashing_matches_murmur_oracle(text):
    assert np.allclose(embed_text(text).values, _oracle_embedding(text), atol=1e-12)


def test_embedding_deterministic_and_repeat_invariant():
    assert np.array_equal(embed_text("db error").values, embed_text("db error").values)
    assert np.allclose(embed_text("db error db error").values, embed_text("db error").values)


def test_empty_text_is_degenerate():
    v = embed_text("  ...  ")
    assert v.degenerate and not v.values.any()


def test_disjoint_texts_near_orthogonal():
    rng = np.random.default_rng(5)
    vocab = [f"w{i}" for i in range(2000)]
    for _ in range(100):
        words = rng.choice(vocab, size=20, replace=False)
        a, b = " ".join(words[:10]), " ".join(words[10:])
        assert abs(cosine_similarity(embed_text(a), embed_text(b))) < 0.3


def test_alert_set_single_and_repeated():
    e = embed_text("cpu high")
    assert np.allclose(embed_alert_set(["cpu high"]).values, e.values)
    assert np.allclose(embed_alert_set(["cpu high", "cpu high"]).values, e.values)


def test_alert_set_three_titles_oracle():
    titles = ["cpu high", "disk full on db", "login errors"]
    mean = np.mean([_oracle_embedding(t) for t in titles], axis=0)
    assert np.allclose(embed_alert_set(titles).values, mean / np.linalg.norm(mean), atol=1e-12)


def test_alert_set_empty():
    with pytest.raises(ValueError):
        embed_alert_set([])


def test_cosine_identities():
    v = embed_text("queue backlog growing")
    assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-9)
    assert cosine_similarity(v, -np.asarray(v)) == pytest.approx(-1.0, abs=1e-9)
    assert cosine_similarity([1, 0, 0], [0, 1, 0]) == 0.0
    with pytest.raises(ValueError):
        cosine_similarity([0, 0], [1, 0])


@given(st.lists(st.lists(st.floats(-5, 5), min_size=3, max_size=3), min_size=1, max_size=6))
def test_cosine_in_range_and_distance_matrix(rows):
    X = np.array(rows)
    D = cosine_distance_matrix(X)
    assert np.allclose(D, D.T) and np.all(np.diag(D) == 0)
    assert np.all(D >= -1e-12) and np.all(D <= 2 + 1e-12)


def test_hashing_transform_is_sklearn_compatible():
    emb = HashingEmbedder(dim=32)
    X = emb.fit_transform(["a b", "c"])
    assert X.shape == (2, 32)
    assert emb.get_params() == {"dim": 32}


def test_provider_factories():
    assert isinstance(build_embedder({"kind": "hashing", "dim": 64}), HashingEmbedder)
    assert isinstance(build_summarizer(None), LeadSummarizer)
    with pytest.raises(ValueError):
        build_embedder({"kind": "bert"})
