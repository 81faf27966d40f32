"""Experiment runs: one result file per question, resumable, with a config
snapshot and a report in the run directory."""
from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Mapping

from . import prompts
from .agent import AgentConfig, run_episode
from .baselines import RagConfig, base_llm_answer, graph_rag_answer, text_rag_answer
from .benchgen.templates import load_dataset
from .evaluate import aggregate, score_results
from .graph import Graph, GraphError, load_graph_file
from .llm import Backend, GenerationConfig, LLMError, make_backend
from .retrieval import RetrievalError, build_index, load_index, load_index_config

logger = logging.getLogger(__name__)

METHODS = ("base", "text-rag", "graph-rag", "graph-cot")
SOFT_STATUSES = ("finished", "answered", "max_steps", "parse_failure")
RESULTS_DIR = "results"
TIMING_LOG = "timing.log"


class RunError(RuntimeError):
    pass


@dataclass
class RunConfig:
    method: str
    graph: str
    dataset: str
    backend: str
    output: str
    seed: int = 0
    workers: int = 1
    hops: int = 1
    k_docs: int = 1
    max_iterations: int = 10
    retrieval_k: int = 1
    demonstrations: str = "academic"  # built-in set name or a JSON file of strings
    index: str | None = None
    index_config: str | None = None
    context_token_budget: int = 12_000
    token_budget: int = 16_000
    max_tokens: int = 512

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {', '.join(METHODS)}, got {self.method!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown run config keys: {', '.join(sorted(unknown))}")
        missing = [f.name for f in fields(cls) if f.name in ("method", "graph", "dataset", "backend", "output") and f.name not in data]
        if missing:
            raise ValueError(f"run config is missing {', '.join(missing)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise RunError(f"cannot read run config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise RunError(f"malformed run config {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunSummary:
    total: int
    remaining: int
    finished: int
    hard_failures: int
    report: dict = field(default_factory=dict)

    @property
    def line(self) -> str:
        return f"{self.finished}/{self.total} finished"


def dump_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_if_changed(path: Path, text: str) -> bool:
    if path.exists() and path.read_text(encoding="utf-8") == text:
        return False
    write_atomic(path, text)
    return True


def prepare_run_dir(cfg: RunConfig) -> Path:
    """Create the run directory atomically, or validate it for resumption."""
    out = Path(cfg.output)
    snapshot = dump_json(cfg.to_dict())
    if out.exists():
        cfg_path = out / "config.json"
        if not cfg_path.exists():
            raise RunError(f"output dir {out} exists but is not a run directory")
        if cfg_path.read_text(encoding="utf-8") != snapshot:
            raise RunError(f"output dir {out} holds a run with a different config")
        (out / RESULTS_DIR).mkdir(exist_ok=True)
        return out
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=out.parent, prefix=f".{out.name}."))
    (tmp / RESULTS_DIR).mkdir()
    (tmp / "config.json").write_text(snapshot, encoding="utf-8")
    try:
        os.rename(tmp, out)
    except OSError:
        # lost a race with a concurrent creator; fall back to resuming theirs
        for p in sorted(tmp.rglob("*"), reverse=True):
            p.unlink() if p.is_file() else p.rmdir()
        tmp.rmdir()
        return prepare_run_dir(cfg)
    return out


def load_demonstrations(spec: str) -> tuple[str, ...]:
    if spec in prompts.DEMONSTRATIONS:
        return tuple(prompts.DEMONSTRATIONS[spec])
    try:
        demos = json.loads(Path(spec).read_text(encoding="utf-8"))
    except OSError as exc:
        raise RunError(f"cannot read demonstrations {spec}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise RunError(f"malformed demonstrations file {spec}: {exc}") from None
    if not isinstance(demos, list) or not all(isinstance(d, str) for d in demos):
        raise RunError(f"demonstrations file {spec} must be a JSON list of strings")
    return tuple(demos)


def _answer(cfg: RunConfig, g: Graph, idx, backend: Backend, sample, agent_cfg: AgentConfig, rag_cfg: RagConfig) -> tuple[dict, float]:
    result: dict[str, Any] = {
        "qid": sample.qid,
        "method": cfg.method,
        "question": sample.question,
        "reference": sample.answer,
        "difficulty": sample.difficulty,
        "graph_id": sample.graph_id or g.graph_id,
        "template_id": sample.template_id,
    }
    if cfg.method == "graph-cot":
        trace = run_episode(sample.question, g, idx, backend, agent_cfg, episode_key=sample.qid)
        result.update(
            prediction=trace.prediction,
            status=trace.termination,
            trace=trace.to_dict(),
            error=trace.error,
        )
        return result, trace.wall_time
    llm = backend.episode(sample.qid, sample.question)
    start = time.perf_counter()
    try:
        if cfg.method == "base":
            ans = base_llm_answer(sample.question, llm, rag_cfg)
        elif cfg.method == "text-rag":
            ans = text_rag_answer(sample.question, g, idx, llm, rag_cfg)
        else:
            ans = graph_rag_answer(sample.question, g, idx, llm, rag_cfg)
    except (LLMError, RetrievalError, GraphError) as exc:
        result.update(prediction="", status="error", error=str(exc))
        return result, time.perf_counter() - start
    if ans.context_truncated:
        logger.info("%s: context truncated to %d tokens", sample.qid, rag_cfg.context_token_budget)
    result.update(
        prediction=ans.prediction,
        status="answered",
        error=None,
        seeds=ans.seeds,
        context_tokens=ans.context_tokens,
        context_truncated=ans.context_truncated,
        prompt=[m.to_dict() for m in ans.messages],
    )
    return result, time.perf_counter() - start


def run(cfg: RunConfig, backend: Backend | None = None, echo: Callable[[str], None] = print) -> RunSummary:
    g = load_graph_file(cfg.graph)
    samples = load_dataset(cfg.dataset)
    seen: set[str] = set()
    for s in samples:
        if s.qid in seen:
            raise RunError(f"dataset {cfg.dataset} repeats qid {s.qid!r}")
        if "/" in s.qid or s.qid.startswith("."):
            raise RunError(f"qid {s.qid!r} cannot be used as a file name")
        seen.add(s.qid)
    if cfg.index:
        idx = load_index(cfg.index)
    else:
        idx = build_index(g, load_index_config(cfg.index_config) if cfg.index_config else None)
    backend = backend or make_backend(cfg.backend)
    gen = GenerationConfig(max_tokens=cfg.max_tokens)
    agent_cfg = AgentConfig(
        max_iterations=cfg.max_iterations,
        demonstrations=load_demonstrations(cfg.demonstrations) if cfg.method == "graph-cot" else (),
        graph_description=g.description,
        retrieval_k=cfg.retrieval_k,
        token_budget=cfg.token_budget,
        generation=gen,
    )
    rag_cfg = RagConfig(k_docs=cfg.k_docs, hops=cfg.hops, context_token_budget=cfg.context_token_budget, generation=gen)

    out = prepare_run_dir(cfg)
    results_dir = out / RESULTS_DIR
    pending = [s for s in samples if not (results_dir / f"{s.qid}.json").exists()]
    echo(f"{len(pending)} remaining")
    log_lock = threading.Lock()

    def work(sample) -> None:
        try:
            result, seconds = _answer(cfg, g, idx, backend, sample, agent_cfg, rag_cfg)
        except Exception as exc:  # one bad question must not sink the run
            logger.exception("%s failed", sample.qid)
            result = {
                "qid": sample.qid, "method": cfg.method, "question": sample.question, "reference": sample.answer,
                "difficulty": sample.difficulty, "graph_id": sample.graph_id or g.graph_id,
                "template_id": sample.template_id, "prediction": "", "status": "error", "error": str(exc),
            }
            seconds = 0.0
        write_atomic(results_dir / f"{sample.qid}.json", dump_json(result))
        with log_lock, open(out / TIMING_LOG, "a", encoding="utf-8") as fh:
            fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')}\t{sample.qid}\t{seconds:.3f}\t{result['status']}\n")

    if pending:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(work, pending))

    records = [json.loads((results_dir / f"{s.qid}.json").read_text(encoding="utf-8")) for s in samples]
    finished = sum(r["status"] in ("finished", "answered") for r in records)
    hard = sum(r["status"] not in SOFT_STATUSES for r in records)
    report = aggregate(score_results(r for r in records if r.get("reference") is not None)) if any(
        r.get("reference") is not None for r in records
    ) else {"methods": {}}
    write_if_changed(out / "report.json", dump_json(report))
    summary = RunSummary(len(records), len(pending), finished, hard, report)
    echo(summary.line)
    return summary


def load_results(run_dir: str | Path) -> list[dict]:
    rdir = Path(run_dir) / RESULTS_DIR
    if not rdir.is_dir():
        raise RunError(f"{run_dir} is not a run directory (no {RESULTS_DIR}/)")
    files = sorted(rdir.glob("*.json"))
    if not files:
        raise RunError(f"run directory {run_dir} has no results")
    return [json.loads(p.read_text(encoding="utf-8")) for p in files]
