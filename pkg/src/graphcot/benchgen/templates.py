"""Question templates, instantiation by graph sampling, paraphrasing and
dataset export."""
from __future__ import annotations

import json
import logging
import os
import random
import re
import string
from collections import Counter
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import IO, Any, Iterable, Mapping, Sequence

from ..graph import Graph
from ..llm import Backend, ChatMessage, GenerationConfig
from .chains import ChainError, Skip, outputs, run_chain

logger = logging.getLogger(__name__)

DIFFICULTIES = ("easy", "medium", "hard")
DOMAINS = ("academic", "ecommerce", "literature", "healthcare", "legal")

PARAPHRASE_PROMPT = (
    "Paraphrase the given template in four different ways. Keep the name in `{}' unchanged, "
    "don't use ' in question, and use the same format (`question string', `answer string'):"
)


class TemplateError(ValueError):
    pass


class ParaphraseError(RuntimeError):
    pass


def placeholders(pattern: str) -> list[str]:
    return [name for _, name, _, _ in string.Formatter().parse(pattern) if name]


@dataclass(frozen=True)
class QuestionTemplate:
    id: str
    question_pattern: str
    answer_pattern: str | None
    difficulty: str
    chain: tuple | None
    domain: str
    answer_source: str = "chain"  # "chain" | "curated"
    context: tuple[str, ...] = ()
    paraphrases: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.difficulty not in DIFFICULTIES:
            raise TemplateError(f"template {self.id}: difficulty must be one of {DIFFICULTIES}")
        if self.answer_source not in ("chain", "curated"):
            raise TemplateError(f"template {self.id}: answer_source must be 'chain' or 'curated'")
        if self.answer_source == "chain" and (self.chain is None or self.answer_pattern is None):
            raise TemplateError(f"template {self.id}: chain answers need a chain and an answer pattern")
        if self.chain is not None:
            bound = outputs(self.chain)
            slots = set(placeholders(self.question_pattern)) | set(placeholders(self.answer_pattern or ""))
            slots |= set(self.context)
            missing = slots - bound
            if missing:
                raise TemplateError(f"template {self.id}: slots not bound by the chain: {sorted(missing)}")
        want = set(placeholders(self.question_pattern))
        for p in self.paraphrases:
            if set(placeholders(p)) != want:
                raise TemplateError(f"template {self.id}: paraphrase {p!r} changes the placeholders")

    @property
    def expressions(self) -> tuple[str, ...]:
        return (self.question_pattern, *self.paraphrases)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], domain: str | None = None) -> "QuestionTemplate":
        try:
            return cls(
                id=data["id"],
                question_pattern=data["question_pattern"],
                answer_pattern=data.get("answer_pattern"),
                difficulty=data["difficulty"],
                chain=tuple(data["chain"]) if data.get("chain") is not None else None,
                domain=data.get("domain") or domain or "",
                answer_source=data.get("answer_source", "chain"),
                context=tuple(data.get("context") or ()),
                paraphrases=tuple(data.get("paraphrases") or ()),
            )
        except KeyError as exc:
            raise TemplateError(f"template missing field {exc}") from None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "domain": self.domain,
            "difficulty": self.difficulty,
            "question_pattern": self.question_pattern,
            "answer_pattern": self.answer_pattern,
            "answer_source": self.answer_source,
            "chain": list(self.chain) if self.chain is not None else None,
            "context": list(self.context),
            "paraphrases": list(self.paraphrases),
        }


@dataclass
class QASample:
    qid: str
    question: str
    answer: str | None
    difficulty: str
    template_id: str
    graph_id: str
    bindings: dict[str, str]
    answer_source: str = "chain"
    anchors: list = field(default_factory=list)
    context: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "QASample":
        return cls(
            qid=data["qid"],
            question=data["question"],
            answer=data.get("answer"),
            difficulty=data["difficulty"],
            template_id=data["template_id"],
            graph_id=data["graph_id"],
            bindings=dict(data.get("bindings") or {}),
            answer_source=data.get("answer_source", "chain"),
            anchors=list(data.get("anchors") or []),
            context=dict(data.get("context") or {}),
        )


class Samples(list):
    """Instantiated samples; ``shortfall`` is how many of the request could not be met."""

    shortfall: int = 0


# -- template files -----------------------------------------------------


def load_templates(source: str | Path | IO) -> list[QuestionTemplate]:
    if hasattr(source, "read"):
        data = json.load(source)
    else:
        data = json.loads(Path(source).read_text(encoding="utf-8"))
    domain = data.get("domain", "")
    out = [QuestionTemplate.from_dict(t, domain) for t in data.get("templates", [])]
    ids = Counter(t.id for t in out)
    dup = [i for i, n in ids.items() if n > 1]
    if dup:
        raise TemplateError(f"duplicate template ids: {dup}")
    return out


def builtin_templates(domain: str) -> list[QuestionTemplate]:
    if domain not in DOMAINS:
        raise TemplateError(f"no built-in templates for domain {domain!r}; known: {', '.join(DOMAINS)}")
    with resources.files("graphcot.benchgen").joinpath("templates", f"{domain}.json").open("r", encoding="utf-8") as fh:
        return load_templates(fh)


# -- instantiation --------------------------------------------------------


def _text(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ", ".join(str(v) for v in value)
    return str(value)


def realize(t: QuestionTemplate, env: Mapping[str, Any], pattern: str | None = None) -> tuple[str, str | None, dict]:
    """(question, answer, bindings) from a chain environment."""
    pattern = pattern or t.question_pattern
    slots = placeholders(pattern) + placeholders(t.answer_pattern or "")
    bindings = {s: _text(env[s]) for s in dict.fromkeys(slots)}
    question = pattern.format_map(bindings)
    answer = t.answer_pattern.format_map(bindings) if t.answer_source == "chain" else None
    return question, answer, bindings


def instantiate(
    t: QuestionTemplate,
    g: Graph,
    n: int,
    seed: int = 0,
    max_attempts: int | None = None,
    paraphrase: bool = False,
) -> Samples:
    """Up to ``n`` samples with distinct bindings.

    Anchors failing a chain precondition are resampled; when the graph
    cannot supply ``n`` distinct samples within the attempt budget the
    result is partial and ``shortfall`` says by how much.  With
    ``paraphrase`` the question text rotates through the template's
    expressions.
    """
    out = Samples()
    if t.chain is None:
        out.shortfall = n
        logger.info("template %s has no executable chain; skipped", t.id)
        return out
    rng = random.Random(f"{seed}:{t.id}")
    attempts = max_attempts if max_attempts is not None else max(200, 40 * n)
    seen: set[tuple] = set()
    for _ in range(attempts):
        if len(out) >= n:
            break
        try:
            env, choices = run_chain(t.chain, g, rng=rng)
        except Skip:
            continue
        question, answer, bindings = realize(t, env)
        key = tuple(sorted(bindings.items()))
        if key in seen:
            continue
        seen.add(key)
        if paraphrase and t.paraphrases:
            question = realize(t, env, t.expressions[len(out) % len(t.expressions)])[0]
        out.append(
            QASample(
                qid=f"{g.graph_id}-{t.id}-{len(out):04d}",
                question=question,
                answer=answer,
                difficulty=t.difficulty,
                template_id=t.id,
                graph_id=g.graph_id,
                bindings=bindings,
                answer_source=t.answer_source,
                anchors=choices,
                context={c: env[c] for c in t.context},
            )
        )
    out.shortfall = n - len(out)
    if out.shortfall:
        logger.warning("template %s: %d of %d samples could not be generated", t.id, out.shortfall, n)
    return out


def replay_answer(t: QASample | Any, template: QuestionTemplate, g: Graph) -> str | None:
    """Re-execute the template's chain with the sample's recorded anchors."""
    if template.chain is None:
        raise ChainError(f"template {template.id} has no chain")
    env, _ = run_chain(template.chain, g, replay=t.anchors)
    return realize(template, env)[1]


def generate_questions(
    templates: Sequence[QuestionTemplate], g: Graph, per_template: int, seed: int = 0, paraphrase: bool = False
) -> tuple[list[QASample], dict[str, int]]:
    """Samples for every template, plus the shortfall per template id."""
    samples: list[QASample] = []
    shortfalls: dict[str, int] = {}
    for t in templates:
        got = instantiate(t, g, per_template, seed, paraphrase=paraphrase)
        samples.extend(got)
        if got.shortfall:
            shortfalls[t.id] = got.shortfall
    return samples, shortfalls


# -- paraphrasing ---------------------------------------------------------

_PAIR = re.compile(r"""\(\s*[`'"‘“](?P<q>.+?)[`'"’”]\s*,\s*[`'"‘“](?P<a>.*?)[`'"’”]\s*\)""")
_NUMBERED = re.compile(r"^\s*(?:\d+[.)]|[-*])\s*")


def paraphrase_prompt(t: QuestionTemplate) -> str:
    return f"{PARAPHRASE_PROMPT}\n(`{t.question_pattern}', `{t.answer_pattern or ''}')"


def _candidates(text: str) -> list[str]:
    out = []
    for line in text.splitlines():
        m = _PAIR.search(line)
        if m:
            out.append(m.group("q").strip())
            continue
        line = _NUMBERED.sub("", line).strip()
        if line and "{" in line:
            out.append(line.strip("`'\""))
    return out


def paraphrase_templates(
    t: QuestionTemplate,
    backend: Backend,
    retries: int = 3,
    cfg: GenerationConfig | None = None,
) -> list[str]:
    """Four rewrites of ``t.question_pattern`` that keep every placeholder.

    A rewrite whose placeholder set differs from the original is rejected;
    the backend is asked again (up to ``retries`` extra calls) until four
    valid, distinct rewrites have been collected.
    """
    want = set(placeholders(t.question_pattern))
    messages = [ChatMessage("user", paraphrase_prompt(t))]
    cfg = cfg or GenerationConfig(temperature=0.7)
    accepted: list[str] = []
    for attempt in range(retries + 1):
        text = backend.complete(messages, cfg).text
        for cand in _candidates(text):
            try:
                ok = set(placeholders(cand)) == want
            except ValueError:
                ok = False
            if not ok:
                logger.info("rejected paraphrase without the template's placeholders: %r", cand)
                continue
            if cand != t.question_pattern and cand not in accepted:
                accepted.append(cand)
            if len(accepted) == 4:
                return accepted
        logger.info("paraphrase attempt %d yielded %d/4 valid rewrites", attempt + 1, len(accepted))
    raise ParaphraseError(f"template {t.id}: only {len(accepted)} valid paraphrases after {retries + 1} requests")


# -- export ---------------------------------------------------------------


def dataset_manifest(samples: Iterable[QASample]) -> dict:
    per_graph: dict[str, dict[str, int]] = {}
    templates: dict[str, dict[str, set]] = {}
    total = 0
    for s in samples:
        total += 1
        cell = per_graph.setdefault(s.graph_id, {d: 0 for d in DIFFICULTIES})
        cell[s.difficulty] += 1
        templates.setdefault(s.graph_id, {d: set() for d in DIFFICULTIES})[s.difficulty].add(s.template_id)
    return {
        "total": total,
        "questions": {gid: per_graph[gid] for gid in sorted(per_graph)},
        "templates": {gid: {d: len(v) for d, v in templates[gid].items()} for gid in sorted(templates)},
    }


def export_dataset(samples: Sequence[QASample], sink: str | Path | IO) -> dict:
    """Write one JSON object per line; returns the manifest.

    With a path sink the manifest is written next to it as
    ``<stem>.manifest.json`` and the JSONL file is replaced atomically.
    """
    lines = "".join(json.dumps(s.to_dict(), ensure_ascii=False, sort_keys=True) + "\n" for s in samples)
    manifest = dataset_manifest(samples)
    if hasattr(sink, "write"):
        sink.write(lines)
        return manifest
    path = Path(sink)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(lines, encoding="utf-8")
    os.replace(tmp, path)
    mpath = path.with_name(path.stem + ".manifest.json")
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def load_dataset(source: str | Path | IO) -> list[QASample]:
    text = source.read() if hasattr(source, "read") else Path(source).read_text(encoding="utf-8")
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(QASample.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"dataset line {n}: {exc}") from None
    return out
