"""Base LLM, Text RAG and Graph RAG baselines.

Retrieved context is a list of records.  A node record is
``(<node_type> <id>) <field>: <value>; ...`` with fields in name order; an
edge record is ``(<id>) -<edge_type>-> (<id>)``.  Node records come first, in
BFS order, then edge records.  Budget truncation drops whole trailing
records.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from .graph import EgoGraph, Graph, ego_graph
from .llm import Backend, ChatMessage, Completion, GenerationConfig, count_tokens
from .retrieval import RetrievalError, RetrievalHit

logger = logging.getLogger(__name__)

LINEARIZE_STYLE = "records-v1"
TRUNCATION_NOTE = "(subgraph truncated)"

BASE_INSTRUCTION = "Answer the question. Give only the answer, without explanation."
RAG_INSTRUCTION = (
    "Answer the question using the context retrieved from the graph. "
    "Please answer by providing node main feature (e.g., names) rather than node IDs."
)


@dataclass
class RagConfig:
    k_docs: int = 1
    hops: int = 1
    context_token_budget: int = 12_000
    node_cap: int = 500
    linearize_style: str = LINEARIZE_STYLE
    generation: GenerationConfig = field(default_factory=GenerationConfig)

    def __post_init__(self) -> None:
        if self.k_docs < 1 or self.context_token_budget < 1 or self.node_cap < 1:
            raise ValueError("k_docs, context_token_budget and node_cap must be positive")
        if self.hops < 0:
            raise ValueError("hops must be >= 0")
        if self.linearize_style != LINEARIZE_STYLE:
            raise ValueError(f"unknown linearize_style {self.linearize_style!r}")


@dataclass
class BaselineAnswer:
    prediction: str
    messages: list[ChatMessage]
    seeds: list[str] = field(default_factory=list)
    context_tokens: int = 0
    context_truncated: bool = False
    completion: Completion | None = None


def _value_text(value) -> str:
    if isinstance(value, tuple):
        return "[" + ", ".join(value) + "]"
    return value


def node_record(g: Graph, node_id: str) -> str:
    node = g.nodes[node_id]
    fields = "; ".join(f"{k}: {_value_text(node.features[k])}" for k in sorted(node.features))
    head = f"({node.node_type} {node_id})"
    return f"{head} {fields}" if fields else head


def linearize_records(eg: EgoGraph, g: Graph) -> list[str]:
    records = [node_record(g, nid) for nid in eg.nodes]
    members = set(eg.nodes)
    for nid in eg.nodes:
        nbrs = g.nodes[nid].neighbors
        for etype in sorted(nbrs):
            for other in nbrs[etype]:
                if other in members:
                    records.append(f"({nid}) -{etype}-> ({other})")
    if eg.truncated:
        records.append(TRUNCATION_NOTE)
    return records


def pack_records(records: Sequence[str], budget: int | None) -> tuple[str, bool]:
    """Join records while they fit in ``budget`` tokens; returns (text, truncated)."""
    if budget is None:
        return "\n".join(records), False
    kept: list[str] = []
    used = 0
    for rec in records:
        n = count_tokens(rec)
        if used + n > budget:
            return "\n".join(kept), True
        kept.append(rec)
        used += n
    return "\n".join(kept), False


def linearize(eg: EgoGraph, g: Graph, budget: int | None = None) -> str:
    return pack_records(linearize_records(eg, g), budget)[0]


def _ask(backend: Backend, instruction: str, question: str, context: str | None, gen: GenerationConfig):
    body = f"{instruction}\n\n"
    if context is not None:
        body += f"Context:\n{context}\n\n"
    body += f"Question: {question}\nAnswer:"
    messages = [ChatMessage("user", body)]
    out = backend.complete(messages, gen)
    return messages, out


def base_llm_answer(question: str, backend: Backend, cfg: RagConfig | None = None) -> BaselineAnswer:
    cfg = cfg or RagConfig()
    messages, out = _ask(backend, BASE_INSTRUCTION, question, None, cfg.generation)
    return BaselineAnswer(out.text.strip(), messages, completion=out)


def retrieve_seeds(idx, question: str, k: int) -> list[RetrievalHit]:
    if len(idx) == 0:
        raise RetrievalError("index is empty")
    return idx.retrieve(question, k)


def rag_context(g: Graph, seeds: Sequence[str], hops: int, cfg: RagConfig) -> tuple[str, bool]:
    """Context for the seeds' ``hops``-ego-graphs, budget-truncated."""
    records: list[str] = []
    for seed in seeds:
        records.extend(linearize_records(ego_graph(g, seed, hops, cfg.node_cap), g))
    text, truncated = pack_records(records, cfg.context_token_budget)
    if truncated:
        logger.info("context truncated to %d tokens", cfg.context_token_budget)
    return text, truncated


def _rag_answer(question, g, idx, backend, cfg: RagConfig, hops: int) -> BaselineAnswer:
    seeds = [h.node for h in retrieve_seeds(idx, question, cfg.k_docs)]
    context, truncated = rag_context(g, seeds, hops, cfg)
    messages, out = _ask(backend, RAG_INSTRUCTION, question, context, cfg.generation)
    return BaselineAnswer(out.text.strip(), messages, seeds, count_tokens(context), truncated, out)


def text_rag_answer(question: str, g: Graph, idx, backend: Backend, cfg: RagConfig | None = None) -> BaselineAnswer:
    """Top ``k_docs`` node records as context (the graph treated as a text corpus)."""
    return _rag_answer(question, g, idx, backend, cfg or RagConfig(), hops=0)


def graph_rag_answer(question: str, g: Graph, idx, backend: Backend, cfg: RagConfig | None = None) -> BaselineAnswer:
    """Each seed's ``cfg.hops`` ego-graph, linearized, as context."""
    cfg = cfg or RagConfig()
    return _rag_answer(question, g, idx, backend, cfg, hops=cfg.hops)
