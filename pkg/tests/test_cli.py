from __future__ import annotations

import json

import pytest

from graphcot.cli import main
from graphcot.evaluate import aggregate, score_results
from graphcot.graph import Graph, Node, save_graph_file
from graphcot.retrieval import build_index, load_index, retrieve
from graphcot.runner import RunConfig, RunError, load_results, run


def _cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture()
def demo_copy(tmp_path, capsys):
    code, out, _ = _cli(capsys, "init-demo", tmp_path / "demo")
    assert code == 0
    return tmp_path / "demo"


def _run_args(demo, out, method="graph-cot", backend=None):
    return [
        "run", "--method", method, "--graph", demo / "academic.json", "--dataset", demo / "questions.jsonl",
        "--backend", backend or f"scripted:{demo / 'transcript.json'}", "--output", out,
    ]


def test_index_three_nodes(tmp_path, capsys):
    g = Graph.build([Node(f"p{i}", "paper", {"title": f"paper number {i}"}, {}) for i in range(3)])
    save_graph_file(g, tmp_path / "g.json")
    code, out, _ = _cli(capsys, "index", "--graph", tmp_path / "g.json", "--out", tmp_path / "i.json")
    assert code == 0 and out.strip() == "indexed 3 documents"
    rebuilt = load_index(tmp_path / "i.json")
    assert retrieve(rebuilt, "paper number 2", 3) == retrieve(build_index(g), "paper number 2", 3)


def test_index_bad_config_path(tmp_path, capsys, demo_copy):
    code, out, err = _cli(capsys, "index", "--graph", demo_copy / "academic.json", "--config", tmp_path / "nope.json", "--out", tmp_path / "i.json")
    assert code != 0
    assert err.startswith("error: ") and "nope.json" in err and err.count("\n") == 1


def test_usage_errors_are_single_line(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--method", "telepathy"])
    assert exc.value.code != 0
    err = capsys.readouterr().err
    assert err.startswith("error: ") and err.count("\n") == 1


def test_run_demo_then_resume(demo_copy, tmp_path, capsys):
    out_dir = tmp_path / "run"
    code, out, _ = _cli(capsys, *_run_args(demo_copy, out_dir))
    assert code == 0
    assert out.splitlines() == ["3 remaining", "3/3 finished"]
    files = sorted(p.name for p in (out_dir / "results").iterdir())
    assert files == ["demo-q1.json", "demo-q2.json", "demo-q3.json"]
    assert (out_dir / "config.json").exists() and (out_dir / "report.json").exists()
    preds = [json.loads((out_dir / "results" / f).read_text())["prediction"] for f in files]
    assert preds == ["1993", "2", "the astrophysical journal, the atmosphere journal"]

    stamps = {p: p.stat().st_mtime_ns for p in out_dir.rglob("*") if p.is_file()}
    code, out, _ = _cli(capsys, *_run_args(demo_copy, out_dir))
    assert code == 0 and out.splitlines() == ["0 remaining", "3/3 finished"]
    assert {p: p.stat().st_mtime_ns for p in out_dir.rglob("*") if p.is_file()} == stamps


def test_resume_rejects_different_config(demo_copy, tmp_path, capsys):
    out_dir = tmp_path / "run"
    _cli(capsys, *_run_args(demo_copy, out_dir))
    code, _, err = _cli(capsys, *_run_args(demo_copy, out_dir), "--max-iterations", "3")
    assert code != 0 and "different config" in err


def test_partial_resume(demo_copy, tmp_path, capsys):
    out_dir = tmp_path / "run"
    _cli(capsys, *_run_args(demo_copy, out_dir))
    (out_dir / "results" / "demo-q2.json").unlink()
    code, out, _ = _cli(capsys, *_run_args(demo_copy, out_dir))
    assert out.splitlines() == ["1 remaining", "3/3 finished"]


def test_base_method_has_no_graph_calls(demo_copy, tmp_path, capsys):
    t = tmp_path / "t.json"
    t.write_text(json.dumps([{"match": "positional", "key": 1, "completion": "1993"}]))
    out_dir = tmp_path / "base"
    code, out, _ = _cli(capsys, *_run_args(demo_copy, out_dir, "base", f"scripted:{t}"))
    assert code == 0
    for p in (out_dir / "results").iterdir():
        rec = json.loads(p.read_text())
        assert rec["method"] == "base" and "trace" not in rec
        text = json.dumps(rec)
        for name in ("RetrieveNode", "NodeFeature", "NeighbourCheck", "NodeDegree"):
            assert name not in text


@pytest.mark.parametrize("method", ["text-rag", "graph-rag"])
def test_rag_methods_run(demo_copy, tmp_path, capsys, method):
    t = tmp_path / "t.json"
    t.write_text(json.dumps([{"match": "positional", "key": 1, "completion": "an answer"}]))
    code, out, _ = _cli(capsys, *_run_args(demo_copy, tmp_path / method, method, f"scripted:{t}"))
    assert code == 0 and out.splitlines()[-1] == "3/3 finished"
    rec = json.loads((tmp_path / method / "results" / "demo-q1.json").read_text())
    assert rec["seeds"] == ["3101448248"]


def test_hard_failure_sets_exit_code(demo_copy, tmp_path, capsys):
    t = tmp_path / "short.json"
    t.write_text(json.dumps([{"match": "positional", "key": 1, "completion": "Reasoning 1: x\nInteraction 1: NodeDegree[2090642949, author]"}]))
    code, out, err = _cli(capsys, *_run_args(demo_copy, tmp_path / "r", backend=f"scripted:{t}"))
    assert code == 1
    assert out.splitlines()[-1] == "0/3 finished"
    assert err.startswith("error: 3 question(s) failed")
    rec = json.loads((tmp_path / "r" / "results" / "demo-q1.json").read_text())
    assert rec["status"] == "backend_failure" and rec["trace"]["steps"]


def test_eval_report_and_judge(demo_copy, tmp_path, capsys):
    out_dir = tmp_path / "run"
    _cli(capsys, *_run_args(demo_copy, out_dir))
    code, out, _ = _cli(capsys, "eval", out_dir)
    assert code == 0
    header = out.splitlines()[0].split()
    assert header == ["method", "graph", "difficulty", "n", "R-L"]
    assert out.splitlines()[1].split() == ["graph-cot", "all", "all", "3", "100.00"]
    report = json.loads((out_dir / "report.json").read_text())
    assert report == aggregate(score_results(load_results(out_dir)))

    code, out, _ = _cli(capsys, "eval", out_dir, "--judge", "exact-judge")
    assert out.splitlines()[0].split()[-1] == "GPT4score"
    assert out.splitlines()[1].split()[-1] == "100.00"


def test_eval_two_perfect_answers(tmp_path, capsys):
    rdir = tmp_path / "r" / "results"
    rdir.mkdir(parents=True)
    for i, ans in enumerate(["1993", "the astrophysical journal"]):
        rec = {"qid": f"q{i}", "method": "base", "prediction": ans, "reference": ans, "difficulty": "easy", "graph_id": "g", "question": "q"}
        (rdir / f"q{i}.json").write_text(json.dumps(rec))
    code, out, _ = _cli(capsys, "eval", tmp_path / "r")
    assert code == 0 and "100.00" in out.splitlines()[1]


def test_eval_empty_dir(tmp_path, capsys):
    (tmp_path / "empty" / "results").mkdir(parents=True)
    code, _, err = _cli(capsys, "eval", tmp_path / "empty")
    assert code != 0 and err.startswith("error: ")


def test_gen_graph_and_questions(tmp_path, capsys):
    g = tmp_path / "lit.json"
    code, out, _ = _cli(capsys, "gen-graph", "--schema", "literature", "--seed", "3", "--size", "book=200", "--size", "author=80", "--out", g)
    assert code == 0 and (tmp_path / "lit.manifest.json").exists()
    q = tmp_path / "q.jsonl"
    code, out, _ = _cli(capsys, "gen-questions", "--graph", g, "--domain", "literature", "--per-template", "3", "--out", q)
    assert code == 0
    lines = q.read_text().splitlines()
    assert out.strip() == f"wrote {len(lines)} questions to {q}"
    manifest = json.loads((tmp_path / "q.manifest.json").read_text())
    assert manifest["total"] == len(lines)


def test_gen_graph_unknown_schema(tmp_path, capsys):
    with pytest.raises(SystemExit):
        main(["gen-graph", "--schema", "astrology", "--out", str(tmp_path / "x.json")])
    assert capsys.readouterr().err.startswith("error: ")


def test_run_config_file_and_overrides(demo_copy, tmp_path, capsys):
    cfg = json.loads((demo_copy / "run.json").read_text())
    cfg["output"] = str(tmp_path / "fromfile")
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    code, out, _ = _cli(capsys, "run", "--config", tmp_path / "cfg.json", "--workers", "3")
    assert code == 0
    snap = json.loads((tmp_path / "fromfile" / "config.json").read_text())
    assert snap["workers"] == 3 and snap["method"] == "graph-cot"


def test_run_config_unknown_key(tmp_path):
    with pytest.raises(ValueError):
        RunConfig.from_dict({"method": "base", "graph": "g", "dataset": "d", "backend": "b", "output": "o", "colour": 1})


def test_run_rejects_non_run_dir(demo_copy, tmp_path):
    (tmp_path / "occupied").mkdir()
    cfg = RunConfig("graph-cot", str(demo_copy / "academic.json"), str(demo_copy / "questions.jsonl"),
                    f"scripted:{demo_copy / 'transcript.json'}", str(tmp_path / "occupied"))
    with pytest.raises(RunError):
        run(cfg, echo=lambda s: None)


def test_no_api_key_flag():
    from graphcot.cli import build_parser

    text = build_parser().format_help()
    for sub in ("run", "eval", "gen-questions"):
        helptext = build_parser()._subparsers._group_actions[0].choices[sub].format_help()
        assert "key" not in helptext.lower().replace("keys", "")
    assert "api" not in text.lower()
