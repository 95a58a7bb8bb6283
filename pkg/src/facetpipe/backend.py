"""Generation backends behind one protocol.

Two kinds: "http" speaks OpenAI-style completions JSON (request fields
``prompt``, ``max_tokens``, ``temperature``, ``top_p``, ``stop``;
response ``choices[0].text``) with retry/backoff and bounded batch
concurrency; "mock" is a deterministic fixture-driven stand-in used by
tests and dry runs.

Endpoint URL and auth can come from the environment:
FACETPIPE_BACKEND_URL and FACETPIPE_BACKEND_KEY.
"""

from __future__ import annotations

import json
import logging
import os
import random
import re
import time
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import requests

from .errors import (
    BatchError,
    ConfigError,
    DataError,
    FatalRequestError,
    ProtocolError,
    RetryExhaustedError,
)

logger = logging.getLogger(__name__)

ENV_BACKEND_URL = "FACETPIPE_BACKEND_URL"
ENV_BACKEND_KEY = "FACETPIPE_BACKEND_KEY"

BACKOFF_BASE_MS = 250
BACKOFF_FACTOR = 2.0
BACKOFF_JITTER_FRACTION = 0.1

DEFAULT_MOCK_FIXTURE = "mock_fixture.json"

_QUOTED = re.compile(r"`([^`]*)`|'([^']*)'|\"([^\"]*)\"")


@dataclass
class GenerationRequest:
    prompt: str
    max_new_tokens: int = 128
    temperature: float = 0.1
    top_p: float = 1.0
    stop_sequences: list[str] = field(default_factory=list)
    seed: int | None = None

    def __post_init__(self):
        if not self.prompt:
            raise DataError("empty prompt")
        if self.max_new_tokens < 1:
            raise DataError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise DataError("temperature must be >= 0")
        if not 0.0 < self.top_p <= 1.0:
            raise DataError("top_p must be in (0, 1]")


@dataclass
class GenerationResponse:
    text: str
    backend_id: str
    latency_ms: int = 0
    attempt_count: int = 1


@dataclass
class BackendConfig:
    kind: str = "mock"
    endpoint_url: str = ""
    timeout_ms: int = 30000
    max_retries: int = 2
    max_concurrency: int = 4
    headers: dict[str, str] = field(default_factory=dict)
    fixture_path: str | None = None  # mock only

    def __post_init__(self):
        if self.kind not in ("http", "mock"):
            raise ConfigError(f"unknown backend kind: {self.kind!r}")
        if self.timeout_ms < 1:
            raise ConfigError("timeout_ms must be >= 1")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ConfigError("max_concurrency must be >= 1")
        if self.kind == "http" and not self.endpoint_url:
            raise ConfigError("http backend requires endpoint_url")

    @classmethod
    def from_env(cls, env=None, **overrides) -> "BackendConfig":
        """Build an http config from FACETPIPE_BACKEND_URL / _KEY."""
        env = os.environ if env is None else env
        url = overrides.pop("endpoint_url", "") or env.get(ENV_BACKEND_URL, "")
        headers = dict(overrides.pop("headers", {}))
        key = env.get(ENV_BACKEND_KEY, "")
        if key and "Authorization" not in headers:
            headers["Authorization"] = f"Bearer {key}"
        return cls(kind="http", endpoint_url=url, headers=headers, **overrides)

    def describe(self) -> dict:
        """Manifest-friendly descriptor; header values are not included."""
        return {
            "kind": self.kind,
            "endpoint_url": self.endpoint_url,
            "timeout_ms": self.timeout_ms,
            "max_retries": self.max_retries,
            "max_concurrency": self.max_concurrency,
            "header_names": sorted(self.headers),
            "fixture_path": self.fixture_path,
        }


def _load_mock_fixture(fixture_path: str | None) -> dict:
    if fixture_path:
        raw = json.loads(Path(fixture_path).read_text(encoding="utf-8"))
    else:
        raw = json.loads(
            resources.files("facetpipe").joinpath("data", DEFAULT_MOCK_FIXTURE).read_text("utf-8")
        )
    table = {"suffix": dict(raw.get("suffix", {})), "contains": dict(raw.get("contains", {}))}
    return table


class MockBackend:
    """Deterministic lookup-table backend.

    A prompt is answered by the longest fixture key that is a suffix of
    the prompt, then by the longest key contained in it; unknown prompts
    echo the last quoted string in the prompt (empty when there is none).
    """

    def __init__(self, config: BackendConfig):
        self.config = config
        self.table = _load_mock_fixture(config.fixture_path)
        self._suffix_keys = sorted(self.table["suffix"], key=lambda k: (-len(k), k))
        self._contains_keys = sorted(self.table["contains"], key=lambda k: (-len(k), k))

    def _lookup(self, prompt: str) -> str:
        stripped = prompt.rstrip()
        for key in self._suffix_keys:
            if stripped.endswith(key):
                return self.table["suffix"][key]
        for key in self._contains_keys:
            if key in prompt:
                return self.table["contains"][key]
        last = None
        for match in _QUOTED.finditer(prompt):
            last = next(g for g in match.groups() if g is not None)
        return last or ""

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        return GenerationResponse(
            text=self._lookup(request.prompt).strip(),
            backend_id="mock",
            latency_ms=0,
            attempt_count=1,
        )


class HttpBackend:
    """Completions-over-HTTP client with retries and backoff.

    Timeouts, connection failures and 5xx responses are retried up to
    max_retries times with exponential backoff (base 250 ms, factor 2,
    seeded jitter within +/-10%).  4xx responses and unparseable bodies
    fail immediately.
    """

    def __init__(self, config: BackendConfig):
        self.config = config
        self.backend_id = f"http:{config.endpoint_url}"

    def _payload(self, request: GenerationRequest) -> dict:
        body = {
            "prompt": request.prompt,
            "max_tokens": request.max_new_tokens,
            "temperature": request.temperature,
            "top_p": request.top_p,
        }
        if request.stop_sequences:
            body["stop"] = list(request.stop_sequences)
        if request.seed is not None:
            body["seed"] = request.seed
        return body

    def _sleep_before_retry(self, attempt: int, rng: random.Random) -> None:
        base_s = (BACKOFF_BASE_MS / 1000.0) * (BACKOFF_FACTOR ** (attempt - 1))
        jitter = rng.uniform(-BACKOFF_JITTER_FRACTION, BACKOFF_JITTER_FRACTION) * base_s
        time.sleep(base_s + jitter)

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        started = time.monotonic()
        rng = random.Random(request.seed)
        headers = {"Content-Type": "application/json", **self.config.headers}
        attempts = self.config.max_retries + 1
        last_error: Exception | None = None
        for attempt in range(1, attempts + 1):
            try:
                resp = requests.post(
                    self.config.endpoint_url,
                    json=self._payload(request),
                    headers=headers,
                    timeout=self.config.timeout_ms / 1000.0,
                )
            except requests.RequestException as exc:
                last_error = exc
                logger.warning("attempt %d/%d failed: %s", attempt, attempts, exc)
                if attempt < attempts:
                    self._sleep_before_retry(attempt, rng)
                continue
            if 400 <= resp.status_code < 500:
                raise FatalRequestError(
                    f"backend rejected request with HTTP {resp.status_code}: {resp.text[:200]}",
                    status_code=resp.status_code,
                )
            if resp.status_code != 200:
                last_error = RetryExhaustedError(f"HTTP {resp.status_code}")
                logger.warning(
                    "attempt %d/%d got HTTP %d", attempt, attempts, resp.status_code
                )
                if attempt < attempts:
                    self._sleep_before_retry(attempt, rng)
                continue
            try:
                text = resp.json()["choices"][0]["text"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ProtocolError(f"malformed completion body: {exc}") from exc
            return GenerationResponse(
                text=text.strip(),
                backend_id=self.backend_id,
                latency_ms=max(0, int((time.monotonic() - started) * 1000)),
                attempt_count=attempt,
            )
        raise RetryExhaustedError(
            f"gave up after {attempts} attempts against {self.config.endpoint_url}: {last_error}"
        )


def make_backend(config: BackendConfig):
    return MockBackend(config) if config.kind == "mock" else HttpBackend(config)


def generate(config: BackendConfig, request: GenerationRequest) -> GenerationResponse:
    """Run one generation request against the configured backend."""
    return make_backend(config).generate(request)


def generate_batch(
    config: BackendConfig, requests_: Sequence[GenerationRequest]
) -> list[GenerationResponse]:
    """Run many requests with at most max_concurrency in flight.

    Responses come back in input order no matter how completions
    interleave.  The first failing request (by input index) aborts the
    batch.
    """
    if not requests_:
        raise DataError("empty request batch")
    backend = make_backend(config)
    results: list[GenerationResponse | None] = [None] * len(requests_)
    with ThreadPoolExecutor(max_workers=config.max_concurrency) as pool:
        futures = {pool.submit(backend.generate, req): i for i, req in enumerate(requests_)}
        wait(futures, return_when=FIRST_EXCEPTION)
        failed: list[tuple[int, Exception]] = []
        for future, index in futures.items():
            if future.cancelled():
                continue
            if future.done() and future.exception() is not None:
                failed.append((index, future.exception()))
                continue
            if future.done():
                results[index] = future.result()
        if failed:
            for future in futures:
                future.cancel()
            index, cause = min(failed, key=lambda pair: pair[0])
            raise BatchError(
                f"request {index} failed: {cause}", index=index, cause=cause
            ) from cause
    missing = [i for i, r in enumerate(results) if r is None]
    if missing:
        raise BatchError(f"request {missing[0]} was cancelled", index=missing[0])
    return results  # type: ignore[return-value]
