"""End-to-end walkthrough on a toy corpus with mock backends.

Builds a tiny evaluation corpus, runs generate -> edit -> score -> judge
with the deterministic mock backends, then prints the metrics table and
the judge's win report.  Everything lands in a scratch directory.

    python3 demos/run_mock_pipeline.py
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from facetpipe import load_config, report, run_experiment
from facetpipe.corpus import Corpus, QueryRecord, load_corpus, save_corpus

FIXTURE = Path(__file__).resolve().parent.parent / "tests" / "data" / "toy_fixture.json"

QUERIES = {
    "warcraft": ["warcraft game", "warcraft movie"],
    "orange": ["orange the color", "orange the fruit", "orange the company"],
    "carrots": ["grow carrots", "cook carrots", "store carrots", "freeze carrots"],
    "firewall": ["firewall hardware", "firewall the movie"],
}

CONFIG = """
seed = 7
runs_dir = "{runs}"

[experiment]
tasks = ["facet"]
editing = "edit"

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
enabled = true

[[editing_options.demos]]
query = "minecraft"
predicted = ["minecraft game", "minecraft videos"]
labels = ["minecraft download", "minecraft mods", "minecraft game"]

[[editing_options.demos]]
query = "tesla"
predicted = ["tesla motors"]
labels = ["tesla car", "tesla stock", "tesla inventor"]
"""


def main() -> None:
    scratch = Path(tempfile.mkdtemp(prefix="facetpipe-demo-"))
    print(f"working in {scratch}\n")

    corpus_path = scratch / "eval.jsonl"
    records = [QueryRecord(query=q, facets=f, split="test") for q, f in QUERIES.items()]
    save_corpus(Corpus(records=records), corpus_path)

    config_path = scratch / "experiment.toml"
    config_path.write_text(CONFIG.format(runs=scratch / "runs", fixture=FIXTURE))

    manifest = run_experiment(load_config(config_path), load_corpus(corpus_path))
    print("stages:", " -> ".join(s["name"] for s in manifest.stages))
    judge_stage = manifest.stages[-1]
    print("judge (edited vs small):", judge_stage["win_report"])
    print()
    print(report([manifest.run_dir]))


if __name__ == "__main__":
    main()
