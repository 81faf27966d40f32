from __future__ import annotations

import json
import math
import re

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphcot.graph import Graph, Node
from graphcot.retrieval import (
    BM25Index,
    DenseIndex,
    EmbeddingClient,
    EmbeddingError,
    IndexConfig,
    IndexConfigError,
    RetrievalError,
    build_index,
    embed_retrieve,
    load_index,
    load_index_config,
    retrieve,
    save_index,
)

TOY = [
    ("d1", "graph neural networks for node classification"),
    ("d2", "large language models reason over graphs"),
    ("d3", "language models as knowledge bases"),
    ("d4", "the graph of thoughts"),
    ("d5", "retrieval augmented generation for knowledge intensive tasks"),
]


def _words(text):
    return re.findall(r"[a-z0-9]+", text.lower())


def _brute_bm25(docs, query, k1=1.2, b=0.75):
    """Textbook Okapi BM25 with the non-negative idf, computed per document."""
    toks = {d: _words(t) for d, t in docs}
    n = len(docs)
    avgdl = sum(len(t) for t in toks.values()) / n
    scores = {}
    for d, t in toks.items():
        s = 0.0
        for q in _words(query):
            tf = t.count(q)
            if not tf:
                continue
            df = sum(1 for other in toks.values() if q in other)
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(t) / avgdl))
        if s > 0:
            scores[d] = s
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))


def _paper_graph(titles):
    return Graph.build([Node(nid, "paper", {"title": t}, {}) for nid, t in titles])


@pytest.mark.parametrize("query", ["language models", "graph", "knowledge graph reasoning", "the tasks for nodes"])
def test_bm25_matches_brute_force(query):
    idx = build_index(_paper_graph(TOY))
    got = [(h.node, h.score) for h in retrieve(idx, query, 5)]
    want = _brute_bm25(TOY, query)
    assert [d for d, _ in got] == [d for d, _ in want]
    for (_, s1), (_, s2) in zip(got, want):
        assert s1 == pytest.approx(s2, rel=1e-12)


def test_document_frequency_recount():
    idx = build_index(_paper_graph(TOY))
    recount = {}
    for _, text in TOY:
        for term in set(_words(text)):
            recount[term] = recount.get(term, 0) + 1
    assert dict(idx.df) == recount


def test_three_papers_three_documents():
    idx = build_index(_paper_graph(TOY[:3]))
    assert len(idx) == 3


def test_empty_documents_excluded_and_counted():
    g = Graph.build([Node("a", "paper", {"title": "x y"}, {}), Node("b", "paper", {"abstract": "no title"}, {})])
    idx = build_index(g)
    assert len(idx) == 1 and idx.excluded == 1


def test_unknown_field_in_config_rejected():
    with pytest.raises(IndexConfigError):
        build_index(_paper_graph(TOY), IndexConfig({"paper": ("color",)}))


def test_invalid_bm25_params():
    with pytest.raises(IndexConfigError):
        IndexConfig(bm25_k1=0)
    with pytest.raises(IndexConfigError):
        IndexConfig(bm25_b=1.5)


def test_zero_overlap_returns_nothing():
    idx = build_index(_paper_graph(TOY))
    assert retrieve(idx, "zebra quasar", 3) == []


def test_k_zero_rejected_and_empty_index_errors():
    idx = build_index(_paper_graph(TOY))
    with pytest.raises(ValueError):
        retrieve(idx, "graph", 0)
    with pytest.raises(RetrievalError):
        retrieve(BM25Index([]), "graph", 1)


def test_demo_title_rank_one(demo_index):
    hits = retrieve(demo_index, "Strongly Interacting Higgs Sector in the Minimal Standard Model", 3)
    assert hits[0].node == "3101448248" and hits[0].rank == 1


def test_exact_match_beats_longer_superset():
    # the superset document scores higher under plain BM25 for this query
    titles = [("a", "deep learning"), ("b", "deep learning deep learning systems")]
    idx = build_index(_paper_graph(titles))
    assert retrieve(idx, "deep learning", 2)[0].node == "a"


def test_duplicates_tie_break_by_id():
    idx = build_index(_paper_graph([("z9", "same text"), ("a1", "same text"), ("m5", "other")]))
    hits = retrieve(idx, "same text", 3)
    assert [h.node for h in hits[:2]] == ["a1", "z9"]
    assert [h.rank for h in hits] == list(range(1, len(hits) + 1))


def test_persisted_index_answers_identically(academic_small, tmp_path):
    idx = build_index(academic_small)
    save_index(idx, tmp_path / "i.json")
    again = load_index(tmp_path / "i.json")
    for nid in academic_small.nodes_of_type("paper")[:20]:
        q = academic_small.node_feature(nid, "title")
        assert retrieve(again, q, 5) == retrieve(idx, q, 5)


def test_index_config_file(tmp_path, academic_small):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"searchable_fields": {"paper": ["title", "abstract"]}, "bm25_k1": 1.5}))
    cfg = load_index_config(p)
    assert cfg.fields_for("paper") == ("title", "abstract") and cfg.bm25_k1 == 1.5
    with pytest.raises(IndexConfigError, match="missing.json"):
        load_index_config(tmp_path / "missing.json")


_text = st.lists(st.sampled_from(["graph", "node", "model", "language", "edge", "query", "x1"]), min_size=1, max_size=6).map(" ".join)


@settings(max_examples=60, deadline=None)
@given(corpus=st.lists(_text, min_size=1, max_size=12), query=_text, k=st.integers(1, 12), k2=st.integers(1, 12))
def test_bm25_properties(corpus, query, k, k2):
    idx = build_index(_paper_graph([(f"n{i:02d}", t) for i, t in enumerate(corpus)]))
    a, b = retrieve(idx, query, k), retrieve(idx, query, k2)
    assert a == retrieve(idx, query, k)
    assert all(h.score >= 0 for h in a)
    m = min(len(a), len(b))
    assert [h.node for h in a[:m]] == [h.node for h in b[:m]]
    scores = [h.score for h in a]
    assert scores == sorted(scores, reverse=True)


# -- dense retrieval ------------------------------------------------------


def test_dense_self_similarity_and_orthogonality():
    vecs = np.eye(4) * 3.0
    idx = DenseIndex(["a", "b", "c", "d"], vecs)
    hit = idx.search_vector([0, 0, 5, 0], 1)[0]
    assert hit.node == "c" and hit.score == pytest.approx(1.0, abs=1e-6)
    orth = DenseIndex(["a", "b"], np.array([[1.0, 0, 0], [0, 1.0, 0]]))
    assert all(abs(h.score) < 1e-6 for h in orth.search_vector([0, 0, 1.0], 2))
    assert np.allclose(np.linalg.norm(idx.vectors, axis=1), 1.0, atol=1e-6)


def test_dense_matches_cosine_scan():
    rng = np.random.default_rng(5)
    vecs = rng.normal(size=(10, 6))
    ids = [f"v{i}" for i in range(10)]
    q = rng.normal(size=6)
    idx = DenseIndex(ids, vecs)
    cos = [float(v @ q / (np.linalg.norm(v) * np.linalg.norm(q))) for v in vecs]
    want = sorted(range(10), key=lambda i: (-cos[i], ids[i]))
    hits = idx.search_vector(q, 10)
    assert [h.node for h in hits] == [ids[i] for i in want]
    assert all(-1 <= h.score <= 1 for h in hits)


def test_dense_dimension_mismatch():
    idx = DenseIndex(["a"], np.ones((1, 3)))
    with pytest.raises(EmbeddingError):
        idx.search_vector([1.0, 2.0], 1)


def _embed_transport(table):
    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        return httpx.Response(200, json={"data": [{"embedding": table[t]} for t in body["input"]]})

    return httpx.MockTransport(handler)


def test_embed_retrieve_via_endpoint(monkeypatch):
    monkeypatch.setenv("GRAPHCOT_EMBED_KEY", "secret")
    table = {"alpha": [1.0, 0.0], "beta": [0.0, 1.0], "query": [0.9, 0.1]}
    g = _paper_graph([("a", "alpha"), ("b", "beta")])
    client = EmbeddingClient("http://embed.test/v1/embeddings", transport=_embed_transport(table))
    idx = DenseIndex.build(g, client)
    assert [h.node for h in embed_retrieve(idx, "query", 2)] == ["a", "b"]


def test_embed_endpoint_unreachable():
    def fail(request):
        raise httpx.ConnectError("refused")

    client = EmbeddingClient("http://embed.test/v1/embeddings", transport=httpx.MockTransport(fail))
    with pytest.raises(EmbeddingError):
        client.embed(["x"])
