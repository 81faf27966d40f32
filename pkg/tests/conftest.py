from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

_CRITERIA: dict[int, tuple[str, bool]] = {}

from graphcot.benchgen.synth import generate_synthetic_graph
from graphcot.graph import load_graph_file
from graphcot.retrieval import build_index


def demo_dir() -> Path:
    return Path(str(resources.files("graphcot") / "data" / "demo"))


@pytest.fixture(scope="session")
def demo_paths() -> dict[str, Path]:
    d = demo_dir()
    return {
        "graph": d / "academic.json",
        "dataset": d / "questions.jsonl",
        "transcript": d / "transcript.json",
    }


@pytest.fixture(scope="session")
def demo_graph(demo_paths):
    return load_graph_file(demo_paths["graph"])


@pytest.fixture(scope="session")
def demo_index(demo_graph):
    return build_index(demo_graph)


@pytest.fixture(scope="session")
def academic_small():
    return generate_synthetic_graph("academic", {"paper": 100, "author": 50, "venue": 5}, seed=7)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    number, title = mark.args
    ok = rep.passed and rep.when == "call"
    prev = _CRITERIA.get(number, (title, True))
    _CRITERIA[number] = (title, prev[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}")
