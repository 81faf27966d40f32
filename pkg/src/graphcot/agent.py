"""The Graph-CoT loop: reason with the LLM, parse its graph calls, execute
them, append the observation and repeat until ``Finish`` or the budget ends."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

from . import prompts
from .graph import Graph, GraphError
from .llm import Backend, ChatMessage, GenerationConfig, LLMError, count_tokens
from .protocol import (
    Finish,
    InteractionCall,
    NeighborCheck,
    NodeDegree,
    NodeFeature,
    ProtocolError,
    RetrieveNode,
    parse_step,
    render_calls,
    render_observation,
)
from .retrieval import RetrievalError

logger = logging.getLogger(__name__)

TERMINATIONS = ("finished", "max_steps", "parse_failure", "backend_failure")
PARSE_ERROR_OBSERVATION = "Error: could not parse interaction."


class PromptBudgetError(Exception):
    def __init__(self, tokens: int, budget: int):
        super().__init__(f"prompt has {tokens} tokens, {tokens - budget} over the budget of {budget}")
        self.tokens = tokens
        self.budget = budget
        self.overflow = tokens - budget


class NoMatchError(RetrievalError):
    pass


@dataclass
class AgentConfig:
    max_iterations: int = 10
    demonstrations: Sequence[str] = ()
    graph_description: str = ""
    retrieval_k: int = 1
    parse_error_limit: int = 2
    token_budget: int = 16_000
    generation: GenerationConfig = field(default_factory=GenerationConfig)

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.retrieval_k < 1 or self.parse_error_limit < 1:
            raise ValueError("retrieval_k and parse_error_limit must be positive")
        self.demonstrations = tuple(self.demonstrations)


@dataclass(frozen=True)
class TraceStep:
    index: int
    reasoning: str
    calls: tuple[InteractionCall, ...]
    observation: str
    completion: str = ""

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "reasoning": self.reasoning,
            "calls": [render_calls([c]) for c in self.calls],
            "observation": self.observation,
            "completion": self.completion,
        }


@dataclass
class AgentTrace:
    question: str
    steps: list[TraceStep]
    final_answer: str | None
    termination: str
    wall_time: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    error: str | None = None

    @property
    def prediction(self) -> str:
        # unterminated episodes score as empty predictions
        return self.final_answer if self.termination == "finished" and self.final_answer else ""

    def to_dict(self) -> dict:
        """Serializable form.  Wall time is left out so traces replay byte-identically."""
        return {
            "question": self.question,
            "steps": [s.to_dict() for s in self.steps],
            "final_answer": self.final_answer,
            "termination": self.termination,
            "tokens": {"prompt": self.prompt_tokens, "completion": self.completion_tokens},
            "error": self.error,
        }


def render_step(step: TraceStep) -> str:
    if not step.calls:
        return f"{step.completion.strip()}\n{step.observation}"
    lines = [f"Reasoning {step.index}: {step.reasoning}", f"Interaction {step.index}: {render_calls(step.calls)}"]
    if step.observation:
        lines.append(step.observation)
    return "\n".join(lines)


def render_history(history: Sequence[TraceStep]) -> str:
    return "\n".join(render_step(s) for s in history)


def build_prompt(question: str, cfg: AgentConfig, history: Sequence[TraceStep] = ()) -> list[ChatMessage]:
    """The single-turn agent prompt, with the running history appended."""
    examples = "\n\n".join(cfg.demonstrations)
    parts = [
        prompts.INSTRUCTION,
        prompts.INTERACTION_INTRO,
        prompts.FUNCTION_DESCRIPTIONS,
        prompts.STEPS_NOTE,
        prompts.EXAMPLES_HEADER,
        examples,
        prompts.EXAMPLES_FOOTER,
        f"Definition of the graph: {cfg.graph_description}",
        f"Question: {question}",
        prompts.CLOSING,
    ]
    text = "\n\n".join(parts)
    if history:
        text += "\n\n" + render_history(history)
    n = count_tokens(text)
    if n > cfg.token_budget:
        raise PromptBudgetError(n, cfg.token_budget)
    return [ChatMessage("user", text)]


class GraphEnvironment:
    """Executes interaction calls against a graph and a retrieval index."""

    def __init__(self, g: Graph, idx, retrieval_k: int = 1):
        self.graph = g
        self.index = idx
        self.retrieval_k = retrieval_k

    def execute(self, call: InteractionCall) -> object:
        """Result of the call, or the exception describing why it failed."""
        try:
            if isinstance(call, RetrieveNode):
                hits = self.index.retrieve(call.query, self.retrieval_k)
                if not hits:
                    raise NoMatchError(f"no node matches {call.query!r}")
                return hits
            if isinstance(call, NodeFeature):
                return self.graph.node_feature(call.node, call.feature)
            if isinstance(call, NeighborCheck):
                return self.graph.neighbor_check(call.node, call.edge_type)
            if isinstance(call, NodeDegree):
                return self.graph.node_degree(call.node, call.edge_type)
        except (GraphError, RetrievalError) as exc:
            return exc
        raise TypeError(f"cannot execute {call!r}")


def run_episode(
    question: str,
    g: Graph,
    idx,
    backend: Backend,
    cfg: AgentConfig,
    episode_key: str | None = None,
) -> AgentTrace:
    env = GraphEnvironment(g, idx, cfg.retrieval_k)
    keys = (episode_key, question) if episode_key else (question,)
    llm = backend.episode(*keys)
    trace = AgentTrace(question, [], None, "max_steps")
    failures = 0
    start = time.perf_counter()
    for i in range(1, cfg.max_iterations + 1):
        try:
            messages = build_prompt(question, cfg, trace.steps)
            out = llm.complete(messages, cfg.generation)
        except (LLMError, PromptBudgetError) as exc:
            logger.warning("episode stopped at step %d: %s", i, exc)
            trace.termination = "backend_failure"
            trace.error = str(exc)
            break
        trace.prompt_tokens += out.prompt_tokens
        trace.completion_tokens += out.completion_tokens
        if out.truncated:
            logger.warning("step %d completion hit max_tokens", i)
        try:
            parsed = parse_step(out.text, i)
        except ProtocolError as exc:
            failures += 1
            logger.info("step %d: unparseable interaction (%s)", i, exc)
            trace.steps.append(TraceStep(i, "", (), f"Execution {i}: {PARSE_ERROR_OBSERVATION}", out.text))
            if failures > cfg.parse_error_limit:
                trace.termination = "parse_failure"
                trace.error = str(exc)
                break
            continue
        failures = 0
        executed: list[InteractionCall] = []
        results: list[object] = []
        answer = None
        for call in parsed.calls:
            executed.append(call)
            if isinstance(call, Finish):
                answer = call.answer
                break
            results.append(env.execute(call))
        observation = render_observation(results, i) if results else ""
        trace.steps.append(TraceStep(i, parsed.reasoning, tuple(executed), observation, out.text))
        if answer is not None:
            trace.final_answer = answer
            trace.termination = "finished"
            break
    trace.wall_time = time.perf_counter() - start
    return trace
