from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphcot.baselines import (
    BASE_INSTRUCTION,
    TRUNCATION_NOTE,
    RagConfig,
    base_llm_answer,
    graph_rag_answer,
    linearize,
    pack_records,
    rag_context,
    text_rag_answer,
)
from graphcot.benchgen.synth import generate_synthetic_graph
from graphcot.graph import EgoGraph, Graph, Node, ego_graph
from graphcot.llm import FunctionBackend, LLMError, RemoteBackend, count_tokens
from graphcot.retrieval import BM25Index, RetrievalError, build_index, retrieve

from stubs import ChatStub

ECHO_1993 = FunctionBackend(lambda m: "1993")


def _two_nodes() -> Graph:
    return Graph.build(
        [
            Node("p1", "paper", {"title": "Graph Reasoning", "year": "2024", "keywords": ["llm", "graphs"]}, {"author": ["a1"]}),
            Node("a1", "author", {"name": "Ada Lovelace"}, {"paper": ["p1"]}),
        ]
    )


def test_golden_two_node_linearization():
    g = _two_nodes()
    text = linearize(ego_graph(g, "p1", 1), g)
    assert text == (
        "(paper p1) keywords: [llm, graphs]; title: Graph Reasoning; year: 2024\n"
        "(author a1) name: Ada Lovelace\n"
        "(p1) -author-> (a1)\n"
        "(a1) -paper-> (p1)"
    )


def test_single_node_has_no_edges():
    g = _two_nodes()
    assert linearize(ego_graph(g, "a1", 0), g) == "(author a1) name: Ada Lovelace"


def test_truncated_flag_noted():
    g = _two_nodes()
    text = linearize(EgoGraph("p1", 1, ("p1",), truncated=True), g)
    assert text.endswith("\n" + TRUNCATION_NOTE)


def test_pack_drops_whole_records():
    records = ["alpha beta", "gamma delta epsilon", "zeta"]
    text, truncated = pack_records(records, 4)
    assert (text, truncated) == ("alpha beta", True)
    assert pack_records(records, 100) == ("\n".join(records), False)


def test_base_answer_has_no_graph_text():
    ans = base_llm_answer("When was it published?", ECHO_1993)
    assert ans.prediction == "1993"
    (msg,) = ans.messages
    assert msg.content == f"{BASE_INSTRUCTION}\n\nQuestion: When was it published?\nAnswer:"
    assert "Context" not in msg.content


def test_base_answer_via_stub_server():
    with ChatStub(reply=lambda body: "echo: " + body["messages"][0]["content"].split("Question: ")[1].split("\n")[0]) as stub:
        ans = base_llm_answer("what?", RemoteBackend(base_url=stub.base_url))
    assert ans.prediction == "echo: what?"


def test_base_answer_backend_failure():
    def boom(m):
        raise LLMError("down")

    with pytest.raises(LLMError):
        base_llm_answer("q", FunctionBackend(boom))


def test_text_rag_single_hit(demo_graph, demo_index):
    q = "Strongly Interacting Higgs Sector in the Minimal Standard Model"
    ans = text_rag_answer(q, demo_graph, demo_index, ECHO_1993, RagConfig(k_docs=1))
    assert ans.seeds == [h.node for h in retrieve(demo_index, q, 1)] == ["3101448248"]
    context = ans.messages[0].content.split("Context:\n")[1].split("\n\nQuestion:")[0]
    assert context == linearize(ego_graph(demo_graph, "3101448248", 0), demo_graph)
    assert q in context and "\n" not in context


def test_text_rag_seeds_equal_retrieval(academic_small):
    idx = build_index(academic_small)
    q = "deep learning for graphs"
    ans = text_rag_answer(q, academic_small, idx, ECHO_1993, RagConfig(k_docs=3))
    assert ans.seeds == [h.node for h in retrieve(idx, q, 3)]


def test_text_rag_budget_truncation(demo_graph, demo_index):
    ans = text_rag_answer("Mass Accretion Rates", demo_graph, demo_index, ECHO_1993, RagConfig(k_docs=3, context_token_budget=40))
    assert ans.context_truncated and ans.context_tokens <= 40


def test_empty_index_errors(demo_graph):
    with pytest.raises(RetrievalError):
        text_rag_answer("q", demo_graph, BM25Index([]), ECHO_1993)


def test_hops_zero_matches_text_rag(demo_graph, demo_index):
    q = "Mass Accretion Rates in Self-Regulated Disks of T Tauri Stars"
    a = text_rag_answer(q, demo_graph, demo_index, ECHO_1993)
    b = graph_rag_answer(q, demo_graph, demo_index, ECHO_1993, RagConfig(hops=0))
    assert a.messages == b.messages


def test_star_context_lists_all_leaves():
    leaves = [Node(f"l{i}", "leaf", {"name": f"leaf number {i}"}, {"hub": ["c"]}) for i in range(6)]
    g = Graph.build([Node("c", "hub", {"name": "center star"}, {"leaf": [f"l{i}" for i in range(6)]}), *leaves])
    ans = graph_rag_answer("center star", g, build_index(g), ECHO_1993, RagConfig(hops=1))
    ctx = ans.messages[0].content
    assert "(hub c) name: center star" in ctx
    for i in range(6):
        assert f"(leaf l{i}) name: leaf number {i}" in ctx


def test_context_grows_with_hops():
    g = generate_synthetic_graph("ecommerce", {"item": 300, "brand": 30}, seed=2)
    idx = build_index(g)
    cfg = {h: RagConfig(hops=h, context_token_budget=10**7, node_cap=10**6) for h in range(3)}
    for nid in g.nodes_of_type("item")[:10]:
        title = g.node_feature(nid, "title")
        sizes = [graph_rag_answer(title, g, idx, ECHO_1993, cfg[h]).context_tokens for h in range(3)]
        assert sizes[0] <= sizes[1] <= sizes[2]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 1000))
def test_linearization_injective_on_small_subgraphs(academic_small, seed):
    ids = list(academic_small.nodes)
    a, b = ids[seed % len(ids)], ids[(seed * 7 + 3) % len(ids)]
    ea, eb = ego_graph(academic_small, a, 1, 10**6), ego_graph(academic_small, b, 1, 10**6)
    if set(ea.nodes) != set(eb.nodes):
        assert linearize(ea, academic_small) != linearize(eb, academic_small)


def test_rag_context_budget_is_respected(academic_small):
    seed = academic_small.nodes_of_type("paper")[0]
    text, truncated = rag_context(academic_small, [seed], 2, RagConfig(context_token_budget=200))
    assert truncated and count_tokens(text) <= 200


def test_rag_config_validation():
    with pytest.raises(ValueError):
        RagConfig(hops=-1)
    with pytest.raises(ValueError):
        RagConfig(linearize_style="prose")
