from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import shutil
import sys
from importlib import resources
from pathlib import Path

from .benchgen.schemas import SCHEMAS
from .benchgen.synth import generate_synthetic_graph
from .benchgen.templates import builtin_templates, export_dataset, generate_questions, load_templates, paraphrase_templates
from .evaluate import aggregate, format_table, score_results
from .graph import load_graph_file, save_graph_file
from .llm import make_backend
from .retrieval import build_index, load_index, load_index_config, save_index
from .runner import METHODS, RunConfig, dump_json, load_results, run, write_atomic
from .service import serve_env

logger = logging.getLogger("graphcot")

DEMO_FILES = ("academic.json", "academic.manifest.json", "questions.jsonl", "transcript.json")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # one line, machine-parsable
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _sizes(pairs: list[str]) -> dict[str, int]:
    out = {}
    for pair in pairs:
        name, sep, n = pair.rpartition("=")
        if not sep or not n.isdigit():
            raise CliError(f"--size expects TYPE=N, got {pair!r}")
        out[name] = int(n)
    return out


def cmd_index(args) -> int:
    g = load_graph_file(args.graph)
    cfg = load_index_config(args.config) if args.config else None
    idx = build_index(g, cfg)
    save_index(idx, args.out)
    print(f"indexed {len(idx)} documents")
    return 0


def cmd_gen_graph(args) -> int:
    g = generate_synthetic_graph(args.schema, _sizes(args.size), seed=args.seed, exponent=args.exponent, graph_id=args.graph_id)
    save_graph_file(g, args.out)
    print(f"wrote {len(g)} nodes to {args.out}")
    return 0


def cmd_gen_questions(args) -> int:
    g = load_graph_file(args.graph)
    templates = load_templates(args.templates) if args.templates else builtin_templates(args.domain)
    if args.paraphrase_backend:
        backend = make_backend(args.paraphrase_backend)
        templates = [
            dataclasses.replace(t, paraphrases=tuple(paraphrase_templates(t, backend))) if t.chain else t
            for t in templates
        ]
    samples, shortfalls = generate_questions(
        templates, g, args.per_template, seed=args.seed, paraphrase=bool(args.paraphrase_backend)
    )
    for tid, n in sorted(shortfalls.items()):
        logger.warning("template %s: %d questions short", tid, n)
    export_dataset(samples, args.out)
    print(f"wrote {len(samples)} questions to {args.out}")
    return 0


def _run_config(args) -> RunConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise CliError(f"cannot read run config {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"malformed run config {args.config}: {exc}") from None
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            data[f.name] = v
    try:
        return RunConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from None


def cmd_run(args) -> int:
    summary = run(_run_config(args))
    if summary.hard_failures:
        print(f"error: {summary.hard_failures} question(s) failed", file=sys.stderr)
        return 1
    return 0


def cmd_eval(args) -> int:
    records = load_results(args.run_dir)
    judge = make_backend(args.judge) if args.judge else None
    report = aggregate(score_results(records, judge, workers=args.workers, beta=args.beta))
    out = Path(args.out) if args.out else Path(args.run_dir) / ("report.json" if judge is None else "report.judged.json")
    write_atomic(out, dump_json(report))
    print(format_table(report), end="")
    return 0


def cmd_serve(args) -> int:
    g = load_graph_file(args.graph)
    idx = load_index(args.index) if args.index else build_index(g)
    serve_env(g, idx, args.bind)
    return 0


def cmd_init_demo(args) -> int:
    dest = Path(args.dir)
    dest.mkdir(parents=True, exist_ok=True)
    src = resources.files("graphcot") / "data" / "demo"
    for name in DEMO_FILES:
        with resources.as_file(src / name) as p:
            shutil.copyfile(p, dest / name)
    cfg = RunConfig(
        method="graph-cot",
        graph=str((dest / "academic.json").resolve()),
        dataset=str((dest / "questions.jsonl").resolve()),
        backend=f"scripted:{(dest / 'transcript.json').resolve()}",
        output=str((dest / "run").resolve()),
    )
    (dest / "run.json").write_text(dump_json(cfg.to_dict()), encoding="utf-8")
    print(f"demo written to {dest}; try: graphcot run --config {dest / 'run.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="graphcot", description="Graph-grounded LLM reasoning: benchmark generation, runs and scoring.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("index", help="build and save a BM25 node index")
    s.add_argument("--graph", required=True)
    s.add_argument("--config", help="index config JSON (searchable fields per node type)")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_index)

    s = sub.add_parser("gen-graph", help="generate a synthetic graph for a domain schema")
    s.add_argument("--schema", required=True, choices=sorted(SCHEMAS))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", action="append", default=[], metavar="TYPE=N")
    s.add_argument("--exponent", type=float, default=2.0, help="zipf exponent of power-law relations")
    s.add_argument("--graph-id")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_gen_graph)

    s = sub.add_parser("gen-questions", help="instantiate question templates over a graph")
    s.add_argument("--graph", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--domain", choices=sorted(SCHEMAS))
    g.add_argument("--templates", help="template JSON file")
    s.add_argument("--per-template", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--paraphrase-backend", help="backend spec used to paraphrase question templates")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_gen_questions)

    s = sub.add_parser("run", help="answer a dataset with one method")
    s.add_argument("--config", help="run config JSON; flags override its keys")
    s.add_argument("--method", choices=METHODS)
    s.add_argument("--graph")
    s.add_argument("--dataset")
    s.add_argument("--backend", help="scripted:PATH or remote:MODEL")
    s.add_argument("--output")
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--hops", type=int)
    s.add_argument("--k-docs", dest="k_docs", type=int)
    s.add_argument("--max-iterations", dest="max_iterations", type=int)
    s.add_argument("--retrieval-k", dest="retrieval_k", type=int)
    s.add_argument("--demonstrations", help="built-in set name or JSON list of demonstration strings")
    s.add_argument("--index")
    s.add_argument("--index-config", dest="index_config")
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("eval", help="score a run directory")
    s.add_argument("run_dir")
    s.add_argument("--judge", help="judge backend spec (remote:MODEL, exact-judge or scripted:PATH)")
    s.add_argument("--workers", type=int, default=4)
    s.add_argument("--beta", type=float, default=1.0, help="Rouge-L recall weight")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("serve", help="serve the graph environment over HTTP")
    s.add_argument("--graph", required=True)
    s.add_argument("--index")
    s.add_argument("--bind", default="127.0.0.1:8080")
    s.set_defaults(fn=cmd_serve)

    s = sub.add_parser("init-demo", help="copy the demonstration fixture and a run config into DIR")
    s.add_argument("dir")
    s.set_defaults(fn=cmd_init_demo)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except OSError as exc:
        where = f" {exc.filename}" if exc.filename else ""
        msg = f"{exc.strerror or exc}{':' if where else ''}{where}"
    except Exception as exc:
        logger.debug("command failed", exc_info=True)
        msg = str(exc) or type(exc).__name__
    print("error: " + " ".join(msg.split()), file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
