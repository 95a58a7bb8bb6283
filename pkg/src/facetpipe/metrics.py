"""Set-level evaluation of generated facet sets.

Four automatic metrics, all in [0, 1]:

* term overlap F1: F1 over the bags of unique normalized tokens pooled
  from each set.
* exact match F1: F1 over unique normalized facet strings.
* set BLEU-mean: per predicted facet, the mean of BLEU-1..4 against all
  gold facets as references (clipped modified precisions, zero counts
  smoothed to 1e-9, brevity penalty against the closest reference
  length); averaged over predicted facets.
* set BERTScore F1: greedy max-similarity matching between facet
  sentences under a pluggable similarity backend, aggregated as
  precision / recall / F1.  The default backend is a character-trigram
  cosine; an HTTP embedding service can stand in for it.

Plus set-shape statistics: average set size, average facet length in
characters, the percentage of facets containing their query as a
substring, and the proportion of duplicate facets within sets.

All set aggregations use math.fsum, so every metric is invariant under
permutation of the facets bit-for-bit.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import requests

from .errors import BackendError, DataError
from .facets import as_facet_list

logger = logging.getLogger(__name__)

BLEU_MAX_ORDER = 4
BLEU_SMOOTH_EPSILON = 1e-9
TRIGRAM_PAD = "##"


@dataclass
class NormalizedFacet:
    """A facet string reduced to comparable lowercase tokens."""

    original: str
    tokens: tuple[str, ...]

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def _strip_token_edges(token: str) -> str:
    start, end = 0, len(token)
    while start < end and not token[start].isalnum():
        start += 1
    while end > start and not token[end - 1].isalnum():
        end -= 1
    return token[start:end]


def normalize(facet: str) -> NormalizedFacet:
    """Lowercase, split on whitespace, strip punctuation off token edges.

    Interior punctuation survives: "fire-wall's" stays one token.
    """
    tokens = []
    for raw in facet.lower().split():
        stripped = _strip_token_edges(raw)
        if stripped:
            tokens.append(stripped)
    return NormalizedFacet(original=facet, tokens=tuple(tokens))


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _require_gold(gold: Sequence[str]) -> list[str]:
    facets = as_facet_list(gold)
    if not facets:
        raise DataError("empty gold facet set")
    return facets


def term_overlap_f1(pred, gold) -> float:
    """F1 over unique normalized tokens pooled across each set."""
    pred_facets = as_facet_list(pred)
    gold_facets = _require_gold(gold)
    pred_terms = {t for f in pred_facets for t in normalize(f).tokens}
    gold_terms = {t for f in gold_facets for t in normalize(f).tokens}
    common = len(pred_terms & gold_terms)
    precision = common / len(pred_terms) if pred_terms else 0.0
    recall = common / len(gold_terms) if gold_terms else 0.0
    return _f1(precision, recall)


def exact_match_f1(pred, gold) -> float:
    """F1 over unique full normalized facet strings."""
    pred_facets = as_facet_list(pred)
    gold_facets = _require_gold(gold)
    pred_strings = {normalize(f).text for f in pred_facets}
    gold_strings = {normalize(f).text for f in gold_facets}
    common = len(pred_strings & gold_strings)
    precision = common / len(pred_strings) if pred_strings else 0.0
    recall = common / len(gold_strings) if gold_strings else 0.0
    return _f1(precision, recall)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _sentence_bleu_mean(candidate: tuple[str, ...], references: list[tuple[str, ...]]) -> float:
    """Mean of BLEU-1..4 for one candidate against multiple references."""
    c_len = len(candidate)
    if c_len == 0:
        return 0.0
    # Brevity penalty uses the reference length closest to the candidate;
    # ties go to the shorter reference so the result is order-independent.
    r_len = min((len(r) for r in references), key=lambda L: (abs(L - c_len), L))
    bp = min(1.0, math.exp(1.0 - r_len / c_len))
    precisions: list[float] = []
    scores: list[float] = []
    for n in range(1, BLEU_MAX_ORDER + 1):
        if c_len - n + 1 < 1:
            break
        cand_counts = _ngram_counts(candidate, n)
        ref_counts = [_ngram_counts(ref, n) for ref in references]
        clipped = 0
        for gram, count in cand_counts.items():
            best = max(rc[gram] for rc in ref_counts)
            clipped += min(count, best)
        total = c_len - n + 1
        p_n = clipped / total if clipped else BLEU_SMOOTH_EPSILON
        precisions.append(p_n)
        geo_mean = math.exp(math.fsum(math.log(p) for p in precisions) / n)
        scores.append(bp * geo_mean)
    if not scores:
        return 0.0
    return math.fsum(scores) / len(scores)


def set_bleu_mean(pred, gold) -> float:
    """Mean over predicted facets of their BLEU-1..4 average."""
    pred_facets = as_facet_list(pred)
    gold_facets = _require_gold(gold)
    if not pred_facets:
        return 0.0
    references = [normalize(g).tokens for g in gold_facets]
    per_facet = [_sentence_bleu_mean(normalize(p).tokens, references) for p in pred_facets]
    return math.fsum(per_facet) / len(per_facet)


class TrigramCosineSimilarity:
    """Character-trigram cosine similarity with "##" boundary padding.

    Deterministic, dependency-free stand-in for embedding similarity:
    symmetric, 1.0 on identical non-empty strings, in [0, 1].
    """

    kind = "char_trigram_cosine"

    @staticmethod
    def _trigrams(text: str) -> Counter:
        if not text:
            return Counter()
        padded = TRIGRAM_PAD + text.lower() + TRIGRAM_PAD
        return Counter(padded[i : i + 3] for i in range(len(padded) - 2))

    def similarity(self, a: str, b: str) -> float:
        ca, cb = self._trigrams(a), self._trigrams(b)
        dot = sum(count * cb[gram] for gram, count in ca.items())
        if dot == 0:
            return 0.0
        norm_sq = sum(c * c for c in ca.values()) * sum(c * c for c in cb.values())
        return min(1.0, dot / math.sqrt(norm_sq))

    def matrix(self, rows: Sequence[str], cols: Sequence[str]) -> list[list[float]]:
        return [[self.similarity(r, c) for c in cols] for r in rows]


class EmbeddingServiceSimilarity:
    """Cosine similarity over vectors from an HTTP embedding service.

    Wire shape: POST {"texts": [...]} -> {"vectors": [[...], ...]}.
    """

    kind = "embedding_service"

    def __init__(self, endpoint: str, timeout_ms: int = 30000):
        if not endpoint:
            raise DataError("embedding_service similarity requires an endpoint")
        self.endpoint = endpoint
        self.timeout_s = timeout_ms / 1000.0

    def _embed(self, texts: Sequence[str]) -> list[list[float]]:
        try:
            resp = requests.post(
                self.endpoint, json={"texts": list(texts)}, timeout=self.timeout_s
            )
        except requests.RequestException as exc:
            raise BackendError(f"embedding service request failed: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"embedding service returned HTTP {resp.status_code}")
        try:
            vectors = resp.json()["vectors"]
        except (ValueError, KeyError) as exc:
            raise BackendError(f"embedding service returned a malformed body: {exc}") from exc
        if len(vectors) != len(texts):
            raise BackendError("embedding service returned a wrong number of vectors")
        return vectors

    @staticmethod
    def _cosine(a: Sequence[float], b: Sequence[float]) -> float:
        dot = math.fsum(x * y for x, y in zip(a, b))
        na = math.fsum(x * x for x in a)
        nb = math.fsum(y * y for y in b)
        if na == 0.0 or nb == 0.0:
            return 0.0
        return max(0.0, min(1.0, dot / math.sqrt(na * nb)))

    def similarity(self, a: str, b: str) -> float:
        return self.matrix([a], [b])[0][0]

    def matrix(self, rows: Sequence[str], cols: Sequence[str]) -> list[list[float]]:
        vectors = self._embed(list(rows) + list(cols))
        row_vecs, col_vecs = vectors[: len(rows)], vectors[len(rows) :]
        return [[self._cosine(r, c) for c in col_vecs] for r in row_vecs]


def make_similarity_backend(kind: str = "char_trigram_cosine", endpoint: str | None = None):
    if kind == "char_trigram_cosine":
        return TrigramCosineSimilarity()
    if kind == "embedding_service":
        return EmbeddingServiceSimilarity(endpoint or "")
    raise DataError(f"unknown similarity backend kind: {kind!r}")


def set_bertscore_f1(pred, gold, backend=None) -> float:
    """Greedy max-similarity precision/recall/F1 between two facet sets."""
    pred_facets = as_facet_list(pred)
    gold_facets = _require_gold(gold)
    if not pred_facets:
        return 0.0
    backend = backend or TrigramCosineSimilarity()
    sims = backend.matrix(pred_facets, gold_facets)
    precision = math.fsum(max(row) for row in sims) / len(pred_facets)
    recall = math.fsum(
        max(sims[i][j] for i in range(len(pred_facets))) for j in range(len(gold_facets))
    ) / len(gold_facets)
    return _f1(precision, recall)


@dataclass
class FacetSetStats:
    """Shape statistics over a collection of facet sets."""

    avg_set_size: float
    avg_facet_length_chars: float
    query_inclusion_pct: float
    duplicate_proportion: float

    def to_dict(self, ndigits: int = 4) -> dict:
        return {
            "avg_set_size": round(self.avg_set_size, ndigits),
            "avg_facet_length_chars": round(self.avg_facet_length_chars, ndigits),
            "query_inclusion_pct": round(self.query_inclusion_pct, ndigits),
            "duplicate_proportion": round(self.duplicate_proportion, ndigits),
        }


def facet_set_stats(sets: Sequence, queries: Sequence[str]) -> FacetSetStats:
    """Compute the four set-shape statistics over aligned sets/queries."""
    if len(sets) != len(queries):
        raise DataError(f"{len(sets)} facet sets but {len(queries)} queries")
    if not sets:
        raise DataError("no facet sets")
    facet_lists = [as_facet_list(s) for s in sets]
    total = sum(len(fl) for fl in facet_lists)
    avg_set_size = math.fsum(len(fl) for fl in facet_lists) / len(facet_lists)
    if total == 0:
        return FacetSetStats(avg_set_size, 0.0, 0.0, 0.0)
    avg_len = math.fsum(len(f) for fl in facet_lists for f in fl) / total
    included = sum(
        1
        for fl, q in zip(facet_lists, queries)
        for f in fl
        if q.lower() in f.lower()
    )
    unique_total = sum(len({normalize(f).text for f in fl}) for fl in facet_lists)
    return FacetSetStats(
        avg_set_size=avg_set_size,
        avg_facet_length_chars=avg_len,
        query_inclusion_pct=100.0 * included / total,
        duplicate_proportion=(total - unique_total) / total,
    )


@dataclass
class MetricReport:
    """Per-run metric values plus set statistics."""

    term_overlap_f1: float
    exact_match_f1: float
    set_bleu_mean: float
    set_bertscore_f1: float
    stats: FacetSetStats
    num_queries: int

    METRIC_KEYS = ("term_overlap_f1", "exact_match_f1", "set_bleu_mean", "set_bertscore_f1")

    def to_dict(self) -> dict:
        out = {key: round(getattr(self, key), 4) for key in self.METRIC_KEYS}
        out["stats"] = self.stats.to_dict()
        out["num_queries"] = self.num_queries
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n"


def read_predictions_jsonl(path: str | Path) -> dict[str, list[str]]:
    """Read {"query": ..., "facets": [...]} JSONL into an ordered mapping."""
    path = Path(path)
    out: dict[str, list[str]] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                query, facets = row["query"], row["facets"]
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad prediction row: {exc}") from exc
            if query in out:
                raise DataError(f"{path}:{lineno}: duplicate query {query!r}")
            out[query] = list(facets)
    if not out:
        raise DataError(f"{path}: no prediction rows")
    return out


def score_facet_sets(
    pred_sets: Sequence, gold_sets: Sequence, queries: Sequence[str], similarity=None
) -> MetricReport:
    """Score aligned predicted/gold facet sets, macro-averaged per query."""
    if not (len(pred_sets) == len(gold_sets) == len(queries)):
        raise DataError("pred/gold/query lists must align")
    similarity = similarity or TrigramCosineSimilarity()
    n = len(queries)
    term = math.fsum(term_overlap_f1(p, g) for p, g in zip(pred_sets, gold_sets)) / n
    exact = math.fsum(exact_match_f1(p, g) for p, g in zip(pred_sets, gold_sets)) / n
    bleu = math.fsum(set_bleu_mean(p, g) for p, g in zip(pred_sets, gold_sets)) / n
    bert = math.fsum(
        set_bertscore_f1(p, g, similarity) for p, g in zip(pred_sets, gold_sets)
    ) / n
    return MetricReport(
        term_overlap_f1=term,
        exact_match_f1=exact,
        set_bleu_mean=bleu,
        set_bertscore_f1=bert,
        stats=facet_set_stats(pred_sets, queries),
        num_queries=n,
    )


def score_run(pred_path: str | Path, gold_path: str | Path, similarity=None) -> MetricReport:
    """Score a predictions file against a gold file, aligned on query.

    Queries present in gold but missing from predictions are an error;
    extra predicted queries are ignored with a warning.
    """
    preds = read_predictions_jsonl(pred_path)
    golds = read_predictions_jsonl(gold_path)
    missing = [q for q in golds if q not in preds]
    if missing:
        raise DataError(f"predictions missing for gold queries: {missing}")
    extra = [q for q in preds if q not in golds]
    if extra:
        logger.warning("ignoring %d predicted queries not present in gold", len(extra))
    queries = list(golds)
    pred_sets = [preds[q] for q in queries]
    gold_sets = [golds[q] for q in queries]
    return score_facet_sets(pred_sets, gold_sets, queries, similarity)


def format_report_table(rows: Sequence[tuple[str, MetricReport]]) -> str:
    """Aligned text table: four metric columns then four stat columns."""
    headers = [
        "run",
        "term_overlap_f1",
        "exact_match_f1",
        "set_bleu_mean",
        "set_bertscore_f1",
        "avg_set_size",
        "avg_facet_len",
        "query_incl_pct",
        "dup_proportion",
    ]
    lines = [headers]
    for name, report in rows:
        lines.append(
            [
                name,
                f"{report.term_overlap_f1:.4f}",
                f"{report.exact_match_f1:.4f}",
                f"{report.set_bleu_mean:.4f}",
                f"{report.set_bertscore_f1:.4f}",
                f"{report.stats.avg_set_size:.2f}",
                f"{report.stats.avg_facet_length_chars:.2f}",
                f"{report.stats.query_inclusion_pct:.2f}",
                f"{report.stats.duplicate_proportion:.2f}",
            ]
        )
    widths = [max(len(row[i]) for row in lines) for i in range(len(headers))]
    rendered = []
    for row in lines:
        rendered.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(rendered)
