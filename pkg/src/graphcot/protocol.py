"""The agent's interaction language.

An LLM step looks like::

    Reasoning 2: The question is asking the published date of a paper ...
    Interaction 2: NodeFeature[3101448248, year]

Calls are ``Name[args]`` separated by commas.  ``RetrieveNode`` and
``Finish`` take their bracket contents verbatim; the two-argument functions
split on the first comma.  A call's contents end at the last ``]`` before the
end of the line or before a ``, KnownName[`` boundary.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence, Union

from .retrieval import RetrievalHit


class ProtocolError(ValueError):
    """Malformed interaction text.  ``fragment`` is the offending substring."""

    def __init__(self, message: str, fragment: str = ""):
        super().__init__(message)
        self.fragment = fragment


class NoCallError(ProtocolError):
    pass


class UnknownFunctionError(ProtocolError):
    def __init__(self, name: str, fragment: str = ""):
        super().__init__(f"unknown function {name!r}", fragment or name)
        self.name = name


class UnbalancedBracketError(ProtocolError):
    pass


class EmptyArgumentError(ProtocolError):
    pass


def _check_arg(value: str, what: str, *, single_line: bool = True) -> None:
    if not isinstance(value, str) or not value or value != value.strip():
        raise ValueError(f"{what} must be a non-empty trimmed string, got {value!r}")
    if single_line and ("\n" in value or "\r" in value):
        raise ValueError(f"{what} must not contain line breaks")


@dataclass(frozen=True)
class RetrieveNode:
    query: str
    name = "RetrieveNode"

    def __post_init__(self) -> None:
        _check_arg(self.query, "RetrieveNode query")

    @property
    def args(self) -> tuple[str, ...]:
        return (self.query,)


@dataclass(frozen=True)
class _NodeCall:
    node: str
    key: str
    name = ""

    def __post_init__(self) -> None:
        _check_arg(self.node, f"{self.name} node")
        _check_arg(self.key, f"{self.name} argument")
        if "," in self.node:
            raise ValueError(f"{self.name} node id must not contain a comma")
        for arg in (self.node, self.key):
            if "[" in arg or "]" in arg:
                raise ValueError(f"{self.name} arguments must not contain brackets")

    @property
    def args(self) -> tuple[str, ...]:
        return (self.node, self.key)


@dataclass(frozen=True)
class NodeFeature(_NodeCall):
    name = "NodeFeature"

    @property
    def feature(self) -> str:
        return self.key


@dataclass(frozen=True)
class NeighborCheck(_NodeCall):
    # rendered with the spelling used in the prompt's function list
    name = "NeighbourCheck"

    @property
    def edge_type(self) -> str:
        return self.key


@dataclass(frozen=True)
class NodeDegree(_NodeCall):
    name = "NodeDegree"

    @property
    def edge_type(self) -> str:
        return self.key


@dataclass(frozen=True)
class Finish:
    answer: str
    name = "Finish"

    def __post_init__(self) -> None:
        _check_arg(self.answer, "Finish answer")

    @property
    def args(self) -> tuple[str, ...]:
        return (self.answer,)


InteractionCall = Union[RetrieveNode, NodeFeature, NeighborCheck, NodeDegree, Finish]

FUNCTIONS: dict[str, type] = {
    "retrievenode": RetrieveNode,
    "nodefeature": NodeFeature,
    "neighbourcheck": NeighborCheck,
    "neighborcheck": NeighborCheck,
    "nodedegree": NodeDegree,
    "finish": Finish,
}

_NAMES = "|".join(sorted(FUNCTIONS, key=len, reverse=True))
_CALL_START = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)[ \t]*\[")
_BOUNDARY = re.compile(r"\][ \t]*,[ \t]*(?=(?:%s)[ \t]*\[)" % _NAMES, re.IGNORECASE)
_LABEL = re.compile(
    r"^[ \t]*(?P<kind>reasoning|thought|interaction|action|execution|observation)[ \t]*(?P<num>\d+)?[ \t]*:",
    re.IGNORECASE | re.MULTILINE,
)
_INLINE_ACTION = re.compile(r"(?<![A-Za-z])(?:interaction|action)[ \t]*\d*[ \t]*:", re.IGNORECASE)
_REASONING = {"reasoning", "thought"}
_INTERACTION = {"interaction", "action"}


@dataclass(frozen=True)
class ParsedStep:
    reasoning: str
    calls: tuple[InteractionCall, ...]


def parse_calls(line: str) -> list[InteractionCall]:
    """Parse one interaction line into calls.  Calls after a Finish are dropped."""
    m = _CALL_START.search(line)
    if m is None:
        raise NoCallError("no function call found", line.strip())
    calls: list[InteractionCall] = []
    pos = m.start()
    while True:
        m = _CALL_START.match(line, pos)
        if m is None:  # pragma: no cover - the boundary lookahead guarantees a call start
            raise NoCallError("expected a function call", line[pos:].strip())
        fname = m.group(1)
        kind = FUNCTIONS.get(fname.lower())
        if kind is None:
            raise UnknownFunctionError(fname, line[pos:].strip())
        body = m.end()
        boundary = _BOUNDARY.search(line, body)
        close = boundary.start() if boundary else line.rfind("]", body)
        if close < 0:
            raise UnbalancedBracketError(f"{kind.name} call has no closing ']'", line[pos:].strip())
        fragment = line[pos : close + 1]
        calls.append(_make_call(kind, line[body:close], fragment))
        if kind is Finish or boundary is None:
            return calls
        pos = boundary.end()


def _make_call(kind: type, content: str, fragment: str) -> InteractionCall:
    if kind in (RetrieveNode, Finish):
        arg = content.strip()
        if not arg:
            raise EmptyArgumentError(f"{kind.name} needs a non-empty argument", fragment)
        if "\n" in arg or "\r" in arg:
            raise UnbalancedBracketError(f"{kind.name} call spans lines", fragment)
        return kind(arg)
    if "," not in content:
        raise EmptyArgumentError(f"{kind.name} takes two arguments: Node, {'feature' if kind is NodeFeature else 'neighbor type'}", fragment)
    node, key = (part.strip() for part in content.split(",", 1))
    if not node or not key:
        raise EmptyArgumentError(f"{kind.name} has an empty argument", fragment)
    if any(c in node + key for c in "[]"):
        raise UnbalancedBracketError(f"unbalanced brackets in {kind.name} arguments", fragment)
    return kind(node, key)


def _segments(text: str) -> list[tuple[str, int | None, str]]:
    labels = list(_LABEL.finditer(text))
    out = []
    for i, m in enumerate(labels):
        end = labels[i + 1].start() if i + 1 < len(labels) else len(text)
        num = int(m.group("num")) if m.group("num") else None
        out.append((m.group("kind").lower(), num, text[m.end() : end]))
    return out


def _pick(segments, kinds: set[str], step_index: int):
    matching = [s for s in segments if s[0] in kinds]
    for seg in matching:
        if seg[1] == step_index:
            return seg
    return matching[0] if matching else None


def parse_step(llm_output: str, step_index: int = 1) -> ParsedStep:
    """Extract the reasoning text and the calls of step ``step_index``.

    When the output runs on into later (hallucinated) steps, only the step
    numbered ``step_index`` is used, falling back to the first labelled one.
    """
    if not isinstance(llm_output, str):
        raise ProtocolError("LLM output must be text", repr(llm_output)[:80])
    text = llm_output.replace("\r\n", "\n")
    segs = _segments(text)
    reasoning_seg = _pick(segs, _REASONING, step_index)
    reasoning = " ".join(reasoning_seg[2].split()) if reasoning_seg else ""
    action = _pick(segs, _INTERACTION, step_index)
    if action is not None:
        lines = [ln for ln in action[2].split("\n") if ln.strip()]
        if not lines:
            raise NoCallError("empty interaction", action[2].strip())
        return ParsedStep(reasoning, tuple(parse_calls(lines[0])))
    # No line-initial interaction label: accept an inline one ("Reasoning 1: ...
    # Interaction 1: X[..]"), else the first unlabelled line that looks like a call.
    for line in text.split("\n"):
        im = _INLINE_ACTION.search(line)
        if im:
            head = " ".join(_LABEL.sub("", line[: im.start()], count=1).split())
            reasoning = head or reasoning
            return ParsedStep(reasoning, tuple(parse_calls(line[im.end() :])))
        lm = _LABEL.match(line)
        if lm and lm.group("kind").lower() not in _INTERACTION:
            continue
        if _CALL_START.search(line):
            if not reasoning:
                reasoning = " ".join(text[: text.find(line)].split())
            return ParsedStep(reasoning, tuple(parse_calls(line)))
    raise NoCallError("no interaction found", text.strip()[:200])


def render_call(call: InteractionCall) -> str:
    return f"{call.name}[{', '.join(call.args)}]"


def render_calls(calls: Sequence[InteractionCall]) -> str:
    return ", ".join(render_call(c) for c in calls)


def render_result(result: object) -> str:
    if isinstance(result, BaseException):
        return f"Error: {result}"
    if isinstance(result, (list, tuple)) and result and all(isinstance(h, RetrievalHit) for h in result):
        ids = [h.node for h in result]
        if len(ids) == 1:
            return f"The ID of this node is {ids[0]}."
        return f"The IDs of the most relevant nodes are {', '.join(ids)}."
    if isinstance(result, (list, tuple)):
        return str(list(result))
    return str(result)


def render_observation(results: Sequence[object], step_index: int = 1) -> str:
    """One ``Execution N:`` line; several results are joined by ", "."""
    if not results:
        raise ValueError("render_observation needs at least one result")
    return f"Execution {step_index}: " + ", ".join(render_result(r) for r in results)
