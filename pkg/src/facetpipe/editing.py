"""Prompt rendering, response parsing, and pairwise judging.

Four templates live under ``templates/`` as plain text with
``{placeholder}`` slots (``{{`` escapes a literal brace):

* ``edit``: two worked demonstrations of predicted facets being
  corrected, then the query under edit and an assistant stub the model
  is expected to continue.
* ``zero_shot``: direct facet generation; the format exemplar line keeps
  literal ``{query}``/``{facets}`` braces on purpose.
* ``few_shot``: two (query, facets) demonstrations plus the stub.
* ``judge``: a pairwise A/B comparison question, no chat markers.

Chat markers come in two styles; ``instruction_response`` swaps the
"### User:" / "### Assistant:" lines for "### Instruction:" /
"### Response:".  Facet lists are substituted in the same comma-space
format the generator is trained to emit.
"""

from __future__ import annotations

import json
import logging
import random
import re
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import backend as backend_mod
from .backend import BackendConfig, GenerationRequest
from .errors import BackendError, DataError, RenderError
from .facets import FacetSet, as_facet_list
from .taskgen import build_target

logger = logging.getLogger(__name__)

TEMPLATE_IDS = ("edit", "zero_shot", "few_shot", "judge")
MARKER_STYLES = ("user_assistant", "instruction_response")

DEFAULT_MAX_FACETS = 10
EDIT_TEMPERATURE = 0.1
EDIT_TOP_P = 1.0

_MARKER_SWAP = {
    "### User:": "### Instruction:",
    "### Assistant:": "### Response:",
    "### Instruction:": "### User:",
    "### Response:": "### Assistant:",
}

_ECHO_PREFIX = re.compile(
    r"^the (?:correct )?facets for\s+[`'\"]?(?P<q>.+?)[`'\"]?\s+are\b[:\s]*",
    re.IGNORECASE | re.DOTALL,
)

_FIRST_TOKEN = re.compile(r"[0-9A-Za-z]+")


@dataclass
class RenderedPrompt:
    template_id: str
    text: str
    marker_style: str = "user_assistant"


@dataclass
class Demonstration:
    """A worked example shown to the model.

    ``predicted`` is required for edit prompts (what the generator said)
    and unused for few-shot prompts.
    """

    query: str
    labels: list[str]
    predicted: list[str] | None = None


@dataclass
class EditRequest:
    query: str
    predicted_facets: FacetSet | Sequence[str]
    demonstrations: Sequence[Demonstration]

    def __post_init__(self):
        if len(self.demonstrations) != 2:
            raise DataError("editing needs exactly 2 demonstrations")
        for demo in self.demonstrations:
            if not demo.query.strip():
                raise DataError("demonstration query is empty")
            if demo.query.strip() == self.query.strip():
                raise DataError(f"demonstration query equals the input query: {demo.query!r}")
            if not demo.labels:
                raise DataError(f"demonstration {demo.query!r} has no label facets")
            if not demo.predicted:
                raise DataError(f"demonstration {demo.query!r} has no predicted facets")


@dataclass
class JudgeVerdict:
    outcome: str  # "A" | "B" | "excluded"
    raw_text: str


@dataclass
class WinReport:
    wins_a: int
    wins_b: int
    excluded: int
    win_ratio_a: float

    @property
    def win_ratio_b(self) -> float:
        return 100.0 - self.win_ratio_a

    def to_dict(self) -> dict:
        return {
            "wins_a": self.wins_a,
            "wins_b": self.wins_b,
            "excluded": self.excluded,
            "win_ratio_a": round(self.win_ratio_a, 2),
            "win_ratio_b": round(self.win_ratio_b, 2),
        }


def template_body(template_id: str) -> str:
    """Load a template body; a single trailing newline is stripped."""
    if template_id not in TEMPLATE_IDS:
        raise RenderError(f"unknown template id: {template_id!r}")
    text = resources.files("facetpipe").joinpath("templates", f"{template_id}.txt").read_text(
        "utf-8"
    )
    return text[:-1] if text.endswith("\n") else text


def template_hashes() -> dict[str, str]:
    import hashlib

    return {
        tid: hashlib.sha256(template_body(tid).encode("utf-8")).hexdigest()
        for tid in TEMPLATE_IDS
    }


class _StrictMapping(dict):
    def __missing__(self, key):
        raise RenderError(f"missing placeholder value: {key!r}")


def _render(template_id: str, values: dict, marker_style: str) -> RenderedPrompt:
    if marker_style not in MARKER_STYLES:
        raise RenderError(f"unknown marker style: {marker_style!r}")
    body = template_body(template_id)
    try:
        text = string.Formatter().vformat(body, (), _StrictMapping(values))
    except (IndexError, ValueError) as exc:
        raise RenderError(f"template {template_id!r} failed to render: {exc}") from exc
    if marker_style == "instruction_response":
        text = swap_marker_style(text)
    return RenderedPrompt(template_id=template_id, text=text, marker_style=marker_style)


def swap_marker_style(text: str) -> str:
    """Swap chat marker lines between the two styles (an involution)."""
    lines = [_MARKER_SWAP.get(line, line) for line in text.split("\n")]
    return "\n".join(lines)


def render_edit_prompt(req: EditRequest, style: str = "user_assistant") -> RenderedPrompt:
    d1, d2 = req.demonstrations
    values = {
        "demo_query_1": d1.query,
        "demo_predicted_1": build_target(d1.predicted),
        "demo_labels_1": build_target(d1.labels),
        "demo_query_2": d2.query,
        "demo_predicted_2": build_target(d2.predicted),
        "demo_labels_2": build_target(d2.labels),
        "query": req.query,
        "predicted": build_target(as_facet_list(req.predicted_facets)),
    }
    return _render("edit", values, style)


def render_zero_shot_prompt(query: str, style: str = "user_assistant") -> RenderedPrompt:
    if not query.strip():
        raise DataError("empty query")
    return _render("zero_shot", {"query": query}, style)


def render_few_shot_prompt(
    query: str, demonstrations: Sequence[Demonstration], style: str = "user_assistant"
) -> RenderedPrompt:
    if not query.strip():
        raise DataError("empty query")
    if len(demonstrations) != 2:
        raise DataError("few-shot prompting needs exactly 2 demonstrations")
    for demo in demonstrations:
        if demo.query.strip() == query.strip():
            raise DataError(f"demonstration query equals the input query: {demo.query!r}")
        if not demo.labels:
            raise DataError(f"demonstration {demo.query!r} has no label facets")
    d1, d2 = demonstrations
    values = {
        "demo_query_1": d1.query,
        "demo_labels_1": build_target(d1.labels),
        "demo_query_2": d2.query,
        "demo_labels_2": build_target(d2.labels),
        "query": query,
    }
    return _render("few_shot", values, style)


def render_judge_prompt(
    query: str, facets_a, facets_b, style: str = "user_assistant"
) -> RenderedPrompt:
    values = {
        "query": query,
        "facets_a": build_target(as_facet_list(facets_a)),
        "facets_b": build_target(as_facet_list(facets_b)),
    }
    return _render("judge", values, style)


def _strip_wrapping_quotes(text: str) -> str:
    t = text.strip()
    while len(t) >= 2 and t[0] == t[-1] and t[0] in "`'\"":
        t = t[1:-1].strip()
    return t


def parse_facet_response(
    text: str, query: str, max_facets: int = DEFAULT_MAX_FACETS, stage: str = "edited"
) -> FacetSet:
    """Turn a model response into a FacetSet.

    Tolerates backtick/quote wrapping, follow-on chatter after "###" or a
    blank line, an echoed "The (correct) facets for '<query>' are"
    prefix, and a sentence-final period.  Splits on bare "," because
    model spacing is unreliable.  Unparseable input yields an empty set
    with ``parse_ok=False`` rather than an error.
    """
    t = text.strip()
    t = t.split("###", 1)[0]
    t = t.split("\n\n", 1)[0]
    t = _strip_wrapping_quotes(t)
    match = _ECHO_PREFIX.match(t)
    if match and match.group("q").strip().lower() == query.strip().lower():
        t = t[match.end() :]
        t = _strip_wrapping_quotes(t)
    if t.endswith("."):
        t = t[:-1]
    facets = [piece.strip() for piece in t.split(",") if piece.strip()]
    facets = facets[:max_facets]
    if not facets:
        logger.debug("unparseable facet response for %r: %r", query, text)
    return FacetSet(query=query, facets=facets, stage=stage, parse_ok=bool(facets))


def _generate_with_query_context(config: BackendConfig, request: GenerationRequest, query: str):
    try:
        return backend_mod.generate(config, request)
    except BackendError as exc:
        raise type(exc)(f"query {query!r}: {exc}") from exc


def edit_facets(
    config: BackendConfig,
    req: EditRequest,
    *,
    style: str = "user_assistant",
    max_new_tokens: int = 128,
    max_facets: int = DEFAULT_MAX_FACETS,
    seed: int | None = None,
) -> FacetSet:
    """Ask the LLM to revise the generator's predicted facets."""
    prompt = render_edit_prompt(req, style)
    response = _generate_with_query_context(
        config,
        GenerationRequest(
            prompt=prompt.text,
            max_new_tokens=max_new_tokens,
            temperature=EDIT_TEMPERATURE,
            top_p=EDIT_TOP_P,
            seed=seed,
        ),
        req.query,
    )
    result = parse_facet_response(response.text, req.query, max_facets=max_facets)
    result.source_facets = as_facet_list(req.predicted_facets)
    return result


def parse_verdict(text: str) -> str:
    """First alphanumeric token decides: "a" -> A, "b" -> B, else excluded."""
    match = _FIRST_TOKEN.search(text)
    if match:
        token = match.group(0).lower()
        if token == "a":
            return "A"
        if token == "b":
            return "B"
    return "excluded"


def judge_pair(
    config: BackendConfig,
    query: str,
    facets_a,
    facets_b,
    *,
    style: str = "user_assistant",
    max_new_tokens: int = 16,
    randomize_order: bool = False,
    seed: int | None = None,
) -> JudgeVerdict:
    """Ask the judge which facet set is better for the query.

    Sets are shown in caller order unless ``randomize_order`` seeds a
    coin flip (verdicts are mapped back to the caller's A/B).
    """
    a_list, b_list = as_facet_list(facets_a), as_facet_list(facets_b)
    if not a_list or not b_list:
        raise DataError(f"judge_pair needs two non-empty facet sets (query {query!r})")
    swapped = False
    if randomize_order:
        swapped = random.Random(seed).random() < 0.5
    shown_a, shown_b = (b_list, a_list) if swapped else (a_list, b_list)
    prompt = render_judge_prompt(query, shown_a, shown_b, style)
    response = _generate_with_query_context(
        config,
        GenerationRequest(
            prompt=prompt.text,
            max_new_tokens=max_new_tokens,
            temperature=0.1,
            top_p=1.0,
            seed=seed,
        ),
        query,
    )
    outcome = parse_verdict(response.text)
    if swapped and outcome in ("A", "B"):
        outcome = "B" if outcome == "A" else "A"
    return JudgeVerdict(outcome=outcome, raw_text=response.text)


def aggregate_verdicts(verdicts: Sequence[JudgeVerdict]) -> WinReport:
    """Win ratio over parsed verdicts; excluded ones counted separately."""
    wins_a = sum(1 for v in verdicts if v.outcome == "A")
    wins_b = sum(1 for v in verdicts if v.outcome == "B")
    excluded = sum(1 for v in verdicts if v.outcome == "excluded")
    if wins_a + wins_b == 0:
        raise DataError("no parsed verdicts")
    return WinReport(
        wins_a=wins_a,
        wins_b=wins_b,
        excluded=excluded,
        win_ratio_a=100.0 * wins_a / (wins_a + wins_b),
    )


def write_judge_jsonl(
    path: str | Path,
    rows: Sequence[tuple[str, str, str, JudgeVerdict]],
) -> None:
    """Persist verdicts as {query, model_a, model_b, outcome, raw_text}."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for query, model_a, model_b, verdict in rows:
            fh.write(
                json.dumps(
                    {
                        "query": query,
                        "model_a": model_a,
                        "model_b": model_b,
                        "outcome": verdict.outcome,
                        "raw_text": verdict.raw_text,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
