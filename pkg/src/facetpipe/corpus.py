"""Corpus ingestion: clarification TSV files plus a SERP archive.

The TSV contract: a header row naming at least ``query`` and
``option_1`` .. ``option_5``; facets are the non-empty option cells in
column order, rows with no options are dropped (and counted).  The SERP
archive is one JSON object keyed by query string; snippet text is pulled
out of each entry along a configurable dotted path shaped like
``webPages.value[*].snippet``.

A corpus is persisted as JSONL (one record per line) next to a manifest
JSON that records source files, their SHA-256 hashes and record counts.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, ParseError

logger = logging.getLogger(__name__)

SPLITS = ("train", "test")
OPTION_COLUMNS = tuple(f"option_{i}" for i in range(1, 6))
DEFAULT_SNIPPET_PATH = "webPages.value[*].snippet"
DEFAULT_RELATED_PATH = "relatedSearches.value[*].text"
DEFAULT_MAX_SNIPPETS = 5

_WS = re.compile(r"\s+")


def normalize_query(query: str) -> str:
    """Lowercase and collapse whitespace; used for dedup and SERP lookup."""
    return _WS.sub(" ", query.strip().lower())


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class QueryRecord:
    """One query with its facet labels and train-time side information."""

    query: str
    facets: list[str]
    snippets: list[str] = field(default_factory=list)
    related_queries: list[str] = field(default_factory=list)
    split: str = "train"

    def __post_init__(self):
        self.query = self.query.strip()
        if not self.query:
            raise DataError("query is empty")
        self.facets = [f.strip() for f in self.facets]
        if any(not f for f in self.facets):
            raise DataError(f"empty facet string for query {self.query!r}")
        if self.split not in SPLITS:
            raise DataError(f"unknown split {self.split!r} for query {self.query!r}")

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "facets": list(self.facets),
            "snippets": list(self.snippets),
            "related_queries": list(self.related_queries),
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, row: dict) -> "QueryRecord":
        try:
            return cls(
                query=row["query"],
                facets=list(row["facets"]),
                snippets=list(row.get("snippets", [])),
                related_queries=list(row.get("related_queries", [])),
                split=row.get("split", "train"),
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"bad corpus record: {exc}") from exc


@dataclass
class Corpus:
    """An ordered list of records plus a manifest of where they came from."""

    records: list[QueryRecord]
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        if "record_count" not in self.manifest:
            self.manifest["record_count"] = len(self.records)
        self.validate()

    def validate(self) -> None:
        if self.manifest.get("record_count") != len(self.records):
            raise DataError(
                f"manifest says {self.manifest.get('record_count')} records, "
                f"corpus holds {len(self.records)}"
            )
        seen: dict[tuple[str, str], str] = {}
        for record in self.records:
            key = (record.split, normalize_query(record.query))
            if key in seen:
                raise DataError(
                    f"duplicate normalized query in split {record.split!r}: {record.query!r}"
                )
            seen[key] = record.query

    def __len__(self) -> int:
        return len(self.records)


def parse_mimics_tsv(path: str | Path, split: str) -> Corpus:
    """Parse a clarification TSV file into a Corpus.

    Engagement/impression columns are ignored.  Rows whose option cells
    are all empty are dropped and counted; rows duplicating an earlier
    normalized query are dropped and counted separately (first wins).
    """
    path = Path(path)
    if split not in SPLITS:
        raise DataError(f"unknown split {split!r}")
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file, expected a header row", line_number=1)
    header = lines[0].split("\t")
    columns = {name: i for i, name in enumerate(header)}
    if "query" not in columns:
        raise ParseError(f"{path}: header has no 'query' column", line_number=1)
    option_idx = [columns[c] for c in OPTION_COLUMNS if c in columns]
    if not option_idx:
        raise ParseError(f"{path}: header has no option_1..option_5 columns", line_number=1)

    records: list[QueryRecord] = []
    seen: set[str] = set()
    dropped_empty = 0
    dropped_duplicate = 0
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(header):
            raise ParseError(
                f"{path}:{lineno}: expected {len(header)} columns, got {len(cells)}",
                line_number=lineno,
            )
        query = cells[columns["query"]].strip()
        if not query:
            raise ParseError(f"{path}:{lineno}: empty query cell", line_number=lineno)
        facets = [cells[i].strip() for i in option_idx if cells[i].strip()]
        if not facets:
            dropped_empty += 1
            continue
        key = normalize_query(query)
        if key in seen:
            dropped_duplicate += 1
            continue
        seen.add(key)
        records.append(QueryRecord(query=query, facets=facets, split=split))

    manifest = {
        "sources": [
            {
                "path": path.name,
                "role": "clarification_tsv",
                "sha256": sha256_file(path),
                "records": len(records),
                "dropped_empty": dropped_empty,
                "dropped_duplicate": dropped_duplicate,
            }
        ],
        "record_count": len(records),
    }
    logger.info(
        "parsed %s: %d records, %d dropped (no options), %d dropped (duplicate query)",
        path.name,
        len(records),
        dropped_empty,
        dropped_duplicate,
    )
    return Corpus(records=records, manifest=manifest)


def _resolve_path(entry, dotted: str) -> list[str]:
    """Pull strings out of a nested JSON entry along a dotted path.

    One segment may carry a ``[*]`` suffix, meaning "iterate this list".
    """
    values = [entry]
    for segment in dotted.split("."):
        expand = segment.endswith("[*]")
        key = segment[:-3] if expand else segment
        next_values = []
        for value in values:
            if not isinstance(value, dict) or key not in value:
                continue
            child = value[key]
            if expand:
                if isinstance(child, list):
                    next_values.extend(child)
            else:
                next_values.append(child)
        values = next_values
    return [v for v in values if isinstance(v, str) and v.strip()]


def _load_serp_mapping(path: Path) -> dict[str, dict]:
    duplicates: list[str] = []

    def check_pairs(pairs):
        keys = [k for k, _ in pairs]
        seen = set()
        for k in keys:
            if k in seen:
                duplicates.append(k)
            seen.add(k)
        return dict(pairs)

    try:
        raw = json.loads(path.read_text(encoding="utf-8"), object_pairs_hook=check_pairs)
    except ValueError as exc:
        raise ParseError(f"{path}: malformed JSON: {exc}") from exc
    if duplicates:
        raise DataError(f"{path}: duplicate query keys: {sorted(set(duplicates))}")
    if not isinstance(raw, dict):
        raise DataError(f"{path}: expected a JSON object keyed by query")

    mapping: dict[str, dict] = {}
    for key, entry in raw.items():
        norm = normalize_query(key)
        if norm in mapping:
            raise DataError(f"{path}: queries collide after normalization: {key!r}")
        mapping[norm] = entry
    return mapping


def attach_serp(
    corpus: Corpus,
    serp_path: str | Path,
    *,
    max_snippets: int = DEFAULT_MAX_SNIPPETS,
    snippet_path: str = DEFAULT_SNIPPET_PATH,
    related_path: str | None = DEFAULT_RELATED_PATH,
) -> Corpus:
    """Return a new Corpus with snippets (and related queries) attached.

    Records are matched by normalized query.  Matching records get up to
    ``max_snippets`` snippets in retrieval order; non-matching records are
    left untouched.  When ``related_path`` is set, related query strings
    are pulled from the same archive.
    """
    serp_path = Path(serp_path)
    mapping = _load_serp_mapping(serp_path)
    new_records = []
    matched = 0
    for record in corpus.records:
        record = copy.deepcopy(record)
        entry = mapping.get(normalize_query(record.query))
        if entry is not None:
            matched += 1
            record.snippets = _resolve_path(entry, snippet_path)[:max_snippets]
            if related_path:
                related = _resolve_path(entry, related_path)
                if related:
                    record.related_queries = related
        new_records.append(record)

    manifest = copy.deepcopy(corpus.manifest)
    manifest.setdefault("sources", []).append(
        {
            "path": serp_path.name,
            "role": "serp_json",
            "sha256": sha256_file(serp_path),
            "matched": matched,
        }
    )
    logger.info("attached SERP data: %d/%d queries matched", matched, len(new_records))
    return Corpus(records=new_records, manifest=manifest)


def corpus_summary(corpus: Corpus) -> dict:
    """Record count, mean facets per query, snippet/related coverage."""
    if not corpus.records:
        raise DataError("empty corpus")
    n = len(corpus.records)
    return {
        "record_count": n,
        "mean_facets_per_query": sum(len(r.facets) for r in corpus.records) / n,
        "snippet_fraction": sum(1 for r in corpus.records if r.snippets) / n,
        "related_fraction": sum(1 for r in corpus.records if r.related_queries) / n,
    }


def _manifest_path_for(jsonl_path: Path) -> Path:
    return jsonl_path.with_name(jsonl_path.stem + ".manifest.json")


def save_corpus(corpus: Corpus, jsonl_path: str | Path) -> Path:
    """Write the corpus as JSONL plus a sibling ``<stem>.manifest.json``."""
    jsonl_path = Path(jsonl_path)
    with jsonl_path.open("w", encoding="utf-8") as fh:
        for record in corpus.records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
    manifest_path = _manifest_path_for(jsonl_path)
    manifest_path.write_text(
        json.dumps(corpus.manifest, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    return manifest_path


def load_corpus(jsonl_path: str | Path) -> Corpus:
    """Read a corpus back from JSONL (+ manifest when present)."""
    jsonl_path = Path(jsonl_path)
    records = []
    with jsonl_path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except ValueError as exc:
                raise ParseError(
                    f"{jsonl_path}:{lineno}: malformed JSON: {exc}", line_number=lineno
                ) from exc
            records.append(QueryRecord.from_dict(row))
    manifest_path = _manifest_path_for(jsonl_path)
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    else:
        manifest = {"sources": [], "record_count": len(records)}
    return Corpus(records=records, manifest=manifest)
