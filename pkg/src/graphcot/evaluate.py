"""Scoring: Rouge-L, an LLM judge, and per-method result tables."""
from __future__ import annotations

import logging
import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Iterable, Mapping, Sequence

from .llm import Backend, ChatMessage, FunctionBackend, GenerationConfig, LLMError
from .retrieval import tokenize

logger = logging.getLogger(__name__)

JUDGE_PROMPT = (
    "Question: {question}\n"
    "Ground truth: {reference}\n"
    "Model answer: {prediction}\n"
    "Is the model answer correct? Answer exactly 'correct' or 'incorrect'."
)
JUDGE_REASK = "Answer with exactly one word: 'correct' or 'incorrect'."
_VERDICT = re.compile(r"^\W*(correct|incorrect)\W*$", re.IGNORECASE)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(prediction: str, reference: str, beta: float = 1.0) -> float:
    """LCS-based F-measure over lowercase alphanumeric tokens.

    ``beta`` weights recall; 1.0 gives F1.
    """
    pred, ref = tokenize(prediction or ""), tokenize(reference or "")
    if not pred or not ref:
        return 0.0
    lcs = lcs_length(pred, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(pred), lcs / len(ref)
    b2 = beta * beta
    return (1 + b2) * p * r / (r + b2 * p)


@dataclass(frozen=True)
class Verdict:
    correct: bool | None  # None: the judge backend failed
    conforming: bool = True
    error: str | None = None

    @property
    def flag(self) -> str | None:
        if self.correct is None:
            return "unjudged"
        return None if self.conforming else "non_conforming"


def parse_verdict(text: str) -> bool | None:
    m = _VERDICT.match(text.strip())
    return None if m is None else m.group(1).lower() == "correct"


def judge(prediction: str, reference: str, question: str, backend: Backend, cfg: GenerationConfig | None = None) -> Verdict:
    """Ask the judge; one re-ask on a non-conforming reply, then incorrect."""
    cfg = cfg or GenerationConfig(max_tokens=5)
    messages = [ChatMessage("user", JUDGE_PROMPT.format(question=question, reference=reference, prediction=prediction))]
    try:
        first = backend.complete(messages, cfg).text
        verdict = parse_verdict(first)
        if verdict is not None:
            return Verdict(verdict)
        messages += [ChatMessage("assistant", first or "(empty)"), ChatMessage("user", JUDGE_REASK)]
        verdict = parse_verdict(backend.complete(messages, cfg).text)
    except LLMError as exc:
        logger.warning("judge failed: %s", exc)
        return Verdict(None, error=str(exc))
    if verdict is None:
        return Verdict(False, conforming=False)
    return Verdict(verdict)


def judge_score(prediction: str, reference: str, question: str, backend: Backend) -> bool:
    """True iff the judge deems the prediction correct.  Backend failures raise."""
    v = judge(prediction, reference, question, backend)
    if v.correct is None:
        raise LLMError(v.error or "judge backend failed")
    return v.correct


def _normalize(text: str) -> str:
    return " ".join(text.casefold().split())


def exact_judge() -> FunctionBackend:
    """A judge that string-compares the ground truth and the model answer."""

    def verdict(messages: Sequence[ChatMessage]) -> str:
        prompt = messages[0].content
        truth = re.search(r"^Ground truth: (.*)$", prompt, re.MULTILINE)
        answer = re.search(r"^Model answer: (.*)$", prompt, re.MULTILINE)
        if truth is None or answer is None:
            return "incorrect"
        return "correct" if _normalize(truth.group(1)) == _normalize(answer.group(1)) else "incorrect"

    return FunctionBackend(verdict)


@dataclass
class ScoredResult:
    qid: str
    method: str
    prediction: str
    reference: str
    rouge_l: float
    difficulty: str
    graph_id: str
    judge_correct: bool | None = None
    judge_flag: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def score_results(
    records: Iterable[Mapping[str, Any]],
    judge_backend: Backend | None = None,
    workers: int = 4,
    beta: float = 1.0,
) -> list[ScoredResult]:
    """Score per-question result records (as written by a run)."""
    records = list(records)
    scored = [
        ScoredResult(
            qid=r["qid"],
            method=r.get("method", ""),
            prediction=r.get("prediction") or "",
            reference=r.get("reference") or "",
            rouge_l=rouge_l(r.get("prediction") or "", r.get("reference") or "", beta),
            difficulty=r.get("difficulty", ""),
            graph_id=r.get("graph_id", ""),
        )
        for r in records
    ]
    if judge_backend is not None:

        def run(i: int) -> Verdict:
            s = scored[i]
            return judge(s.prediction, s.reference, records[i].get("question", ""), judge_backend)

        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            for s, v in zip(scored, pool.map(run, range(len(scored)))):
                s.judge_correct = v.correct
                s.judge_flag = v.flag
    return scored


def _cell(rows: Sequence[ScoredResult]) -> dict:
    judged = [r for r in rows if r.judge_correct is not None]
    return {
        "n": len(rows),
        "rouge_l": round(100 * sum(r.rouge_l for r in rows) / len(rows), 4),
        "gpt4score": round(100 * sum(r.judge_correct for r in judged) / len(judged), 4) if judged else None,
        "judged": len(judged),
        "unjudged": sum(r.judge_flag == "unjudged" for r in rows),
        "non_conforming": sum(r.judge_flag == "non_conforming" for r in rows),
    }


def aggregate(results: Sequence[ScoredResult]) -> dict:
    """Mean Rouge-L (x100) and GPT4score (% correct of judged) per method,
    per graph and per difficulty."""
    if not results:
        raise ValueError("nothing to aggregate")
    graph_ids = {r.graph_id for r in results}
    if "" in graph_ids and len(graph_ids) > 1:
        raise ValueError("results mix several graphs but some lack a graph_id")
    by_method: dict[str, list[ScoredResult]] = defaultdict(list)
    for r in results:
        by_method[r.method].append(r)
    report: dict[str, Any] = {"methods": {}}
    for method in sorted(by_method):
        rows = by_method[method]
        groups: dict[str, dict[str, list]] = {"by_graph": defaultdict(list), "by_difficulty": defaultdict(list)}
        cross: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
        for r in rows:
            groups["by_graph"][r.graph_id].append(r)
            groups["by_difficulty"][r.difficulty].append(r)
            cross[r.graph_id][r.difficulty].append(r)
        report["methods"][method] = {
            "overall": _cell(rows),
            "by_graph": {k: _cell(v) for k, v in sorted(groups["by_graph"].items())},
            "by_difficulty": {k: _cell(v) for k, v in sorted(groups["by_difficulty"].items())},
            "by_graph_difficulty": {
                g: {d: _cell(v) for d, v in sorted(ds.items())} for g, ds in sorted(cross.items())
            },
        }
    return report


def format_table(report: Mapping[str, Any]) -> str:
    """Aligned plain-text table; GPT4score appears only when something was judged."""
    judged = any(
        c["judged"]
        for m in report["methods"].values()
        for c in [m["overall"], *m["by_graph"].values(), *m["by_difficulty"].values()]
    )
    header = ["method", "graph", "difficulty", "n", "R-L"] + (["GPT4score"] if judged else [])
    rows = []
    for method, m in report["methods"].items():
        cells = [("all", "all", m["overall"])]
        for g, ds in m["by_graph_difficulty"].items():
            cells.append((g or "-", "all", m["by_graph"][g]))
            cells.extend((g or "-", d or "-", c) for d, c in ds.items())
        for graph, diff, c in cells:
            row = [method, graph, diff, str(c["n"]), f"{c['rouge_l']:.2f}"]
            if judged:
                row.append("-" if c["gpt4score"] is None else f"{c['gpt4score']:.2f}")
            rows.append(row)
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in [header, *rows]]
    return "\n".join(lines) + "\n"
