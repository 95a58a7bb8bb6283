"""Multi-task training example construction.

One generator model is steered between three generation tasks by a
special token prefixed to the query: "[facet]", "[document]" and
"[related]".  The target for every task is the list of target sentences
joined with ", ".  This module builds those (input, target) pairs from a
corpus, parses generated targets back into lists, and provides the
cross-entropy contract the trainer must honor (per-task mean, summed
across tasks).
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ContractViolation, DataError

logger = logging.getLogger(__name__)

DEFAULT_MAX_SNIPPETS = 5
DEFAULT_SEPARATOR = " </s> "
TARGET_SEPARATOR = ", "

PROB_EPSILON = 1e-12


class TaskKind(str, enum.Enum):
    """The three generation tasks, in canonical order."""

    FACET = "facet"
    DOCUMENT = "document"
    RELATED = "related"

    @property
    def token(self) -> str:
        """Special-token surface form, e.g. "[facet]"."""
        return f"[{self.value}]"


TASK_ORDER: tuple[TaskKind, ...] = (TaskKind.FACET, TaskKind.DOCUMENT, TaskKind.RELATED)


def coerce_task(value: TaskKind | str) -> TaskKind:
    if isinstance(value, TaskKind):
        return value
    try:
        return TaskKind(value)
    except ValueError:
        raise DataError(f"unknown task kind: {value!r}") from None


@dataclass
class TaskExample:
    """One serialized (input, target) training pair."""

    task: TaskKind
    input_text: str
    target_text: str
    query: str


def build_input(
    task: TaskKind | str,
    query: str,
    mode: str = "Q",
    snippets: Sequence[str] = (),
    *,
    split: str | None = None,
    max_snippets: int = DEFAULT_MAX_SNIPPETS,
    separator: str = DEFAULT_SEPARATOR,
) -> str:
    """Build the model input for one task.

    Mode "Q" prefixes the special token to the query.  Mode "QD" appends
    up to ``max_snippets`` document snippets, each introduced by
    ``separator``.  Snippets are train-time-only data, so "QD" with
    ``split="test"`` is refused.
    """
    task = coerce_task(task)
    if not query or not query.strip():
        raise DataError("empty query")
    if mode not in ("Q", "QD"):
        raise DataError(f"unknown input mode: {mode!r}")
    head = f"{task.token} {query}"
    if mode == "Q":
        return head
    if split == "test":
        raise ContractViolation(
            f"snippets of test-split query {query!r} must not be used as model input"
        )
    used = list(snippets)[:max_snippets]
    return head + "".join(f"{separator}{s}" for s in used)


def build_target(items: Sequence[str]) -> str:
    """Join target sentences with ", ".

    Items containing ", " themselves cannot be split back apart; we log a
    warning instead of escaping, because the separator is part of the
    learned output format.
    """
    if not items:
        raise DataError("no target items")
    cleaned = []
    for item in items:
        trimmed = item.strip()
        if not trimmed:
            raise DataError("empty target item")
        if TARGET_SEPARATOR in trimmed:
            logger.warning("target item contains the separator %r: %r", TARGET_SEPARATOR, trimmed)
        cleaned.append(trimmed)
    return TARGET_SEPARATOR.join(cleaned)


def parse_target(text: str) -> list[str]:
    """Split a generated target string back into items.

    Inverse of :func:`build_target`: split on the exact ", " separator,
    trim each piece, drop empties.  A dangling trailing comma is
    tolerated.  Duplicates are preserved.
    """
    t = text.strip()
    while t.endswith(","):
        t = t[:-1].rstrip()
    if not t:
        return []
    return [piece.strip() for piece in t.split(TARGET_SEPARATOR) if piece.strip()]


def _targets_for(record, task: TaskKind, max_snippets: int) -> list[str]:
    if task is TaskKind.FACET:
        return list(record.facets)
    if task is TaskKind.DOCUMENT:
        return list(record.snippets)[:max_snippets]
    return list(record.related_queries)


def build_taskset(
    records: Iterable,
    tasks: Iterable[TaskKind | str],
    mode: str = "Q",
    *,
    max_snippets: int = DEFAULT_MAX_SNIPPETS,
    separator: str = DEFAULT_SEPARATOR,
) -> list[TaskExample]:
    """Build one TaskExample per (record, requested task with targets).

    Ordering is record order, then facet < document < related.  Records
    lacking targets for a task are skipped for that task.  Test-split
    records contribute facet examples only: their snippets and related
    queries are off limits.
    """
    wanted = {coerce_task(t) for t in tasks}
    if not wanted:
        raise DataError("no tasks requested")
    record_list = records.records if hasattr(records, "records") else list(records)
    examples: list[TaskExample] = []
    for record in record_list:
        for task in TASK_ORDER:
            if task not in wanted:
                continue
            if task is not TaskKind.FACET and getattr(record, "split", "train") == "test":
                if _targets_for(record, task, max_snippets):
                    raise ContractViolation(
                        f"{task.value} targets of test-split query {record.query!r} "
                        "must not be used for training"
                    )
                continue
            targets = _targets_for(record, task, max_snippets)
            if not targets:
                continue
            examples.append(
                TaskExample(
                    task=task,
                    input_text=build_input(
                        task,
                        record.query,
                        mode,
                        record.snippets,
                        split=getattr(record, "split", None),
                        max_snippets=max_snippets,
                        separator=separator,
                    ),
                    target_text=build_target(targets),
                    query=record.query,
                )
            )
    if not examples:
        raise DataError("empty taskset")
    return examples


def write_taskset_jsonl(examples: Sequence[TaskExample], path: str | Path) -> None:
    """Export examples as JSONL with fields task, input, target, query."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for ex in examples:
            row = {
                "task": ex.task.value,
                "input": ex.input_text,
                "target": ex.target_text,
                "query": ex.query,
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


@dataclass
class LossInput:
    """Token-level targets paired with predicted distributions.

    ``predicted_distributions[i]`` is the probability vector the model
    assigned at target position i; it must sum to 1 within 1e-9.
    """

    target_token_ids: Sequence[int]
    predicted_distributions: Sequence[Sequence[float]]

    def __post_init__(self):
        if len(self.target_token_ids) != len(self.predicted_distributions):
            raise ValueError("target_token_ids and predicted_distributions lengths differ")
        for pos, dist in enumerate(self.predicted_distributions):
            total = math.fsum(dist)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"distribution at position {pos} sums to {total}, not 1")
            for p in dist:
                if p < 0.0 or p > 1.0:
                    raise ValueError(f"probability out of [0, 1] at position {pos}: {p}")
        for pos, tid in enumerate(self.target_token_ids):
            if not 0 <= tid < len(self.predicted_distributions[pos]):
                raise ValueError(f"target id {tid} out of vocabulary at position {pos}")


@dataclass
class CrossEntropyResult:
    """Mean negative log likelihood plus clamping diagnostics."""

    value: float
    clamped_positions: tuple[int, ...] = ()

    @property
    def clamped(self) -> bool:
        return bool(self.clamped_positions)


def cross_entropy(loss_in: LossInput) -> CrossEntropyResult:
    """Mean over positions of -ln p(target token).

    Zero probabilities are clamped to 1e-12 so degenerate backends cannot
    produce infinities; clamped positions are reported, not hidden.
    """
    n = len(loss_in.target_token_ids)
    if n == 0:
        raise DataError("empty loss input")
    terms = []
    clamped = []
    for pos, tid in enumerate(loss_in.target_token_ids):
        p = loss_in.predicted_distributions[pos][tid]
        if p < PROB_EPSILON:
            clamped.append(pos)
            p = PROB_EPSILON
        terms.append(-math.log(p))
    return CrossEntropyResult(value=math.fsum(terms) / n, clamped_positions=tuple(clamped))


def multi_task_loss(per_task_means: Mapping[TaskKind | str, float]) -> float:
    """Total loss: the sum of the per-task mean cross entropies."""
    if not per_task_means:
        raise DataError("no per-task losses")
    return math.fsum(per_task_means.values())
