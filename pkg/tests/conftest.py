from __future__ import annotations

import json
from pathlib import Path

import pytest

from facetpipe.corpus import Corpus, QueryRecord, save_corpus

DATA_DIR = Path(__file__).parent / "data"
GOLDEN_DIR = Path(__file__).parent / "golden"

TOY_TEST_QUERIES = {
    "warcraft": ["warcraft game", "warcraft movie"],
    "orange": ["orange the color", "orange the fruit", "orange the company"],
    "carrots": ["grow carrots", "cook carrots", "store carrots", "freeze carrots"],
    "firewall": ["firewall hardware", "firewall the movie"],
    "python": ["python language", "python snake"],
    "mercury": ["mercury planet", "mercury element", "mercury singer"],
    "jaguar": ["jaguar car", "jaguar animal"],
    "amazon": ["amazon river", "amazon store"],
    "apple": ["apple fruit", "apple computer"],
    "java": ["java language", "java island", "java coffee"],
}

TOY_TRAIN_RECORDS = [
    ("minecraft", ["minecraft download", "minecraft mods", "minecraft game"]),
    ("tesla", ["tesla car", "tesla stock", "tesla inventor"]),
    ("guitar", ["guitar chords", "guitar lessons"]),
]


@pytest.fixture()
def toy_test_corpus(tmp_path) -> Path:
    records = [
        QueryRecord(query=q, facets=list(facets), split="test")
        for q, facets in TOY_TEST_QUERIES.items()
    ]
    path = tmp_path / "toy_test.jsonl"
    save_corpus(Corpus(records=records), path)
    return path


@pytest.fixture()
def toy_train_corpus(tmp_path) -> Path:
    records = [
        QueryRecord(query=q, facets=list(facets), split="train")
        for q, facets in TOY_TRAIN_RECORDS
    ]
    path = tmp_path / "toy_train.jsonl"
    save_corpus(Corpus(records=records), path)
    return path


def write_toy_config(tmp_path, *, editing="edit", judge_enabled=False, seed=7) -> Path:
    """A mock-backed experiment config pointing at the toy fixture."""
    fixture = DATA_DIR / "toy_fixture.json"
    config = f"""
seed = {seed}
runs_dir = "{tmp_path / 'runs'}"

[experiment]
tasks = ["facet"]
input_mode = "Q"
editing = "{editing}"

[backends.small]
kind = "mock"
fixture_path = "{fixture}"

[backends.llm]
kind = "mock"
fixture_path = "{fixture}"

[backends.judge]
kind = "mock"
fixture_path = "{fixture}"

[judge_options]
enabled = {str(judge_enabled).lower()}

[[editing_options.demos]]
query = "minecraft"
predicted = ["minecraft game", "minecraft videos"]
labels = ["minecraft download", "minecraft mods", "minecraft game"]

[[editing_options.demos]]
query = "tesla"
predicted = ["tesla motors"]
labels = ["tesla car", "tesla stock", "tesla inventor"]
"""
    path = tmp_path / "experiment.toml"
    path.write_text(config, encoding="utf-8")
    return path


def read_golden(name: str) -> str:
    return (GOLDEN_DIR / name).read_text(encoding="utf-8")


def pytest_terminal_summary(terminalreporter):
    tr = terminalreporter
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in tr.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and getattr(rep, "when", None) == "call":
                rows.append((nodeid.split("::")[-1], outcome == "passed"))
    if rows:
        tr.write_sep("-", "acceptance criteria")
        for name, ok in rows:
            tr.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
