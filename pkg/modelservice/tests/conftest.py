from __future__ import annotations

import socket
import threading
import time
from pathlib import Path

import pytest
import uvicorn

from modelservice.config import ServiceConfig
from modelservice.serve import create_app
from modelservice.train import train

# The primary package is a test-only dependency: it writes the taskset
# file this service consumes and speaks the completion protocol.
from facetpipe.corpus import Corpus, QueryRecord, save_corpus
from facetpipe.taskgen import build_taskset, write_taskset_jsonl

NUM_QUERIES = 50


def toy_records(split: str = "train") -> list[QueryRecord]:
    records = []
    for i in range(NUM_QUERIES):
        q = f"topic{i}"
        records.append(
            QueryRecord(
                query=q,
                facets=[f"{q} alpha", f"{q} beta"],
                snippets=[f"about {q} first", f"about {q} second"],
                split=split,
            )
        )
    return records


@pytest.fixture(scope="session")
def toy_taskset(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("data") / "taskset.jsonl"
    examples = build_taskset(Corpus(records=toy_records()), ["facet", "document"])
    write_taskset_jsonl(examples, path)
    return path


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory, toy_taskset) -> Path:
    out = tmp_path_factory.mktemp("ckpt") / "small-model"
    config = ServiceConfig(epochs=400, seed=0)
    return train(toy_taskset, config, out)


@pytest.fixture(scope="session")
def service_url(checkpoint):
    """A live HTTP endpoint over the trained checkpoint."""
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    app = create_app(str(checkpoint))
    server = uvicorn.Server(
        uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 30
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("service did not start")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}/v1/completions"
    server.should_exit = True
    thread.join(timeout=10)


@pytest.fixture(scope="session")
def eval_corpus_path(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("eval") / "eval.jsonl"
    save_corpus(Corpus(records=toy_records(split="test")), path)
    return path
