"""Experiment orchestration with reproducible run manifests.

A run executes generate -> [edit] -> score -> [judge] over an evaluation
corpus and persists every artifact under ``runs/<run_id>/``:

    manifest.json             run metadata, stage log, artifact hashes
    predictions.small.jsonl   generate-stage facet sets
    predictions.edited.jsonl  edit-stage facet sets (editing="edit" only)
    gold.jsonl                gold facet sets for scoring
    metrics.json              metric report over the final prediction stage
    judge.jsonl               pairwise verdicts (when judging is enabled)

With mock backends and a fixed seed, the persisted prediction and metric
bytes are identical across runs; the manifest carries timestamps and is
the only file expected to differ.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
import logging
import os
import random
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import editing, metrics, taskgen
from .backend import BackendConfig, GenerationRequest, generate_batch
from .corpus import Corpus, load_corpus, sha256_file
from .editing import DEFAULT_MAX_FACETS, MARKER_STYLES, Demonstration, EditRequest
from .errors import ConfigError, DataError
from .facets import FacetSet

logger = logging.getLogger(__name__)

EDITING_MODES = ("none", "edit", "zero_shot", "few_shot")
PREDICTIONS_SMALL = "predictions.small.jsonl"
PREDICTIONS_EDITED = "predictions.edited.jsonl"
GOLD_FILE = "gold.jsonl"
METRICS_FILE = "metrics.json"
JUDGE_FILE = "judge.jsonl"
MANIFEST_FILE = "manifest.json"


@dataclass
class ExperimentConfig:
    """Everything a run needs, resolved and validated."""

    tasks: tuple[str, ...] = ("facet",)
    input_mode: str = "Q"
    editing: str = "none"
    marker_style: str = "user_assistant"
    max_snippets: int = taskgen.DEFAULT_MAX_SNIPPETS
    separator: str = taskgen.DEFAULT_SEPARATOR
    max_facets: int = DEFAULT_MAX_FACETS
    max_new_tokens: int = 128
    temperature: float = 0.1
    top_p: float = 1.0
    seed: int = 0
    runs_dir: str = "runs"
    small_backend: BackendConfig = field(default_factory=BackendConfig)
    llm_backend: BackendConfig = field(default_factory=BackendConfig)
    judge_backend: BackendConfig = field(default_factory=BackendConfig)
    similarity_kind: str = "char_trigram_cosine"
    similarity_endpoint: str = ""
    demo_corpus: str | None = None
    demos: list[dict] | None = None
    judge_enabled: bool = False
    judge_randomize_order: bool = False

    def __post_init__(self):
        for task in self.tasks:
            taskgen.coerce_task(task)
        if "facet" not in self.tasks:
            raise ConfigError("the facet task must always be selected")
        if self.input_mode not in ("Q", "QD"):
            raise ConfigError(f"unknown input_mode: {self.input_mode!r}")
        if self.editing not in EDITING_MODES:
            raise ConfigError(f"unknown editing mode: {self.editing!r}")
        if self.marker_style not in MARKER_STYLES:
            raise ConfigError(f"unknown marker_style: {self.marker_style!r}")
        if self.editing in ("edit", "few_shot") and not (self.demos or self.demo_corpus):
            raise ConfigError(
                f"editing={self.editing!r} needs demonstrations: set demo_corpus or demos"
            )

    def to_canonical_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key in ("small_backend", "llm_backend", "judge_backend"):
            out[key] = getattr(self, key).describe()
        return out

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_canonical_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _backend_from_dict(raw: dict, env, mock: bool) -> BackendConfig:
    raw = dict(raw)
    file_kind = raw.pop("kind", "mock")
    kind = "mock" if mock else file_kind
    if kind == "http":
        endpoint = raw.pop("endpoint_url", "") or env.get("FACETPIPE_BACKEND_URL", "")
        headers = dict(raw.pop("headers", {}))
        key = env.get("FACETPIPE_BACKEND_KEY", "")
        if key and "Authorization" not in headers:
            headers["Authorization"] = f"Bearer {key}"
        return BackendConfig(kind="http", endpoint_url=endpoint, headers=headers, **raw)
    raw.pop("endpoint_url", None)
    raw.pop("headers", None)
    return BackendConfig(kind="mock", **raw)


def load_config(
    path: str | Path, *, seed: int | None = None, mock: bool = False, env=None
) -> ExperimentConfig:
    """Load a TOML config file; FACETPIPE_* env vars fill http secrets.

    ``mock=True`` forces every backend to the mock kind (fixture paths
    are kept).  ``seed`` overrides the file's seed.
    """
    env = os.environ if env is None else env
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: bad TOML: {exc}") from exc

    experiment = raw.get("experiment", {})
    generation = raw.get("generation", {})
    backends = raw.get("backends", {})
    similarity = raw.get("similarity", {})
    editing_options = raw.get("editing_options", {})
    judge_options = raw.get("judge_options", {})

    def _resolve_relative(value: str | None) -> str | None:
        if not value:
            return value
        p = Path(value)
        return str(p if p.is_absolute() else (path.parent / p))

    try:
        config = ExperimentConfig(
            tasks=tuple(experiment.get("tasks", ["facet"])),
            input_mode=experiment.get("input_mode", "Q"),
            editing=experiment.get("editing", "none"),
            marker_style=experiment.get("marker_style", "user_assistant"),
            max_snippets=experiment.get("max_snippets", taskgen.DEFAULT_MAX_SNIPPETS),
            separator=experiment.get("separator", taskgen.DEFAULT_SEPARATOR),
            max_facets=experiment.get("max_facets", DEFAULT_MAX_FACETS),
            max_new_tokens=generation.get("max_new_tokens", 128),
            temperature=generation.get("temperature", 0.1),
            top_p=generation.get("top_p", 1.0),
            seed=seed if seed is not None else raw.get("seed", 0),
            runs_dir=_resolve_relative(raw.get("runs_dir", "runs")),
            small_backend=_backend_from_dict(
                _with_resolved_fixture(backends.get("small", {}), _resolve_relative), env, mock
            ),
            llm_backend=_backend_from_dict(
                _with_resolved_fixture(backends.get("llm", {}), _resolve_relative), env, mock
            ),
            judge_backend=_backend_from_dict(
                _with_resolved_fixture(backends.get("judge", {}), _resolve_relative), env, mock
            ),
            similarity_kind=similarity.get("kind", "char_trigram_cosine"),
            similarity_endpoint=similarity.get("endpoint", ""),
            demo_corpus=_resolve_relative(editing_options.get("demo_corpus")),
            demos=editing_options.get("demos"),
            judge_enabled=judge_options.get("enabled", False),
            judge_randomize_order=judge_options.get("randomize_order", False),
        )
    except TypeError as exc:
        raise ConfigError(f"{path}: bad config value: {exc}") from exc
    return config


def _with_resolved_fixture(raw: dict, resolver) -> dict:
    raw = dict(raw)
    if raw.get("fixture_path"):
        raw["fixture_path"] = resolver(raw["fixture_path"])
    return raw


def _utc_now() -> str:
    return dt.datetime.now(dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _utc_stamp() -> str:
    return dt.datetime.now(dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ")


@dataclass
class RunManifest:
    """Run metadata: config/corpus identity, stage log, artifact hashes."""

    run_id: str
    run_dir: str
    created_utc: str
    config: dict
    config_hash: str
    corpus_hash: str
    seed: int
    template_hashes: dict
    demos_used: list[dict] = field(default_factory=list)
    stages: list[dict] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def save(self) -> None:
        path = Path(self.run_dir) / MANIFEST_FILE
        path.write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, run_dir: str | Path) -> "RunManifest":
        path = Path(run_dir) / MANIFEST_FILE
        if not path.exists():
            raise DataError(f"{run_dir}: no {MANIFEST_FILE}")
        raw = json.loads(path.read_text(encoding="utf-8"))
        raw["run_dir"] = str(run_dir)
        return cls(**raw)


def _corpus_hash(corpus: Corpus) -> str:
    payload = "\n".join(json.dumps(r.to_dict(), ensure_ascii=False) for r in corpus.records)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _write_predictions(path: Path, sets: Sequence[FacetSet]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for fs in sets:
            fh.write(
                json.dumps({"query": fs.query, "facets": list(fs.facets)}, ensure_ascii=False)
                + "\n"
            )


def resolve_demonstrations(config: ExperimentConfig) -> list[Demonstration]:
    """Pick the two demonstrations for edit/few-shot prompting.

    Explicit demos in the config win; otherwise two training records are
    sampled from ``demo_corpus`` with the run seed.  Edit-style demos
    need predicted facets; when sampling from a corpus, the generation
    backend supplies them.
    """
    if config.demos:
        demos = []
        for raw in config.demos[:2]:
            demos.append(
                Demonstration(
                    query=raw["query"],
                    labels=list(raw["labels"]),
                    predicted=list(raw.get("predicted", [])) or None,
                )
            )
        if len(demos) != 2:
            raise ConfigError("exactly 2 demonstrations are required")
        return demos
    corpus = load_corpus(config.demo_corpus)
    train_records = [r for r in corpus.records if r.split == "train"]
    if len(train_records) < 2:
        raise DataError(f"{config.demo_corpus}: need at least 2 training records for demos")
    rng = random.Random(config.seed)
    picked = rng.sample(train_records, 2)
    demos = [Demonstration(query=r.query, labels=list(r.facets)) for r in picked]
    if config.editing == "edit":
        prompts = [
            taskgen.build_input(taskgen.TaskKind.FACET, d.query, "Q") for d in demos
        ]
        responses = generate_batch(
            config.small_backend,
            [_generation_request(config, p) for p in prompts],
        )
        for demo, resp in zip(demos, responses):
            parsed = editing.parse_facet_response(
                resp.text, demo.query, max_facets=config.max_facets, stage="small"
            )
            demo.predicted = parsed.facets or [demo.query]
    return demos


def _generation_request(config: ExperimentConfig, prompt: str) -> GenerationRequest:
    return GenerationRequest(
        prompt=prompt,
        max_new_tokens=config.max_new_tokens,
        temperature=config.temperature,
        top_p=config.top_p,
        seed=config.seed,
    )


def _stage_generate(config: ExperimentConfig, corpus: Corpus, run_dir: Path, manifest: RunManifest):
    """First prediction stage.

    editing in (none, edit): the fine-tuned generator answers
    "[facet] <query>" inputs.  editing in (zero_shot, few_shot): the LLM
    generates directly from rendered prompts instead.
    """
    queries = [r.query for r in corpus.records]
    if config.editing == "zero_shot":
        prompts = [editing.render_zero_shot_prompt(q, config.marker_style).text for q in queries]
        backend = config.llm_backend
        stage_label = "generate(zero_shot)"
    elif config.editing == "few_shot":
        demos = resolve_demonstrations(config)
        manifest.demos_used = [{"query": d.query, "labels": d.labels} for d in demos]
        prompts = [
            editing.render_few_shot_prompt(q, demos, config.marker_style).text for q in queries
        ]
        backend = config.llm_backend
        stage_label = "generate(few_shot)"
    else:
        prompts = [
            taskgen.build_input(
                taskgen.TaskKind.FACET,
                r.query,
                config.input_mode,
                r.snippets,
                split=r.split,
                max_snippets=config.max_snippets,
                separator=config.separator,
            )
            for r in corpus.records
        ]
        backend = config.small_backend
        stage_label = "generate"
    responses = generate_batch(backend, [_generation_request(config, p) for p in prompts])
    stage = "small" if config.editing in ("none", "edit") else "llm"
    sets = [
        editing.parse_facet_response(resp.text, q, max_facets=config.max_facets, stage=stage)
        for q, resp in zip(queries, responses)
    ]
    _write_predictions(run_dir / PREDICTIONS_SMALL, sets)
    return stage_label, sets


def _stage_edit(config: ExperimentConfig, sets: Sequence[FacetSet], run_dir: Path, manifest):
    demos = resolve_demonstrations(config)
    manifest.demos_used = [
        {"query": d.query, "labels": d.labels, "predicted": d.predicted} for d in demos
    ]
    edited: list[FacetSet] = []
    for fs in sets:
        if not fs.facets:
            # Nothing to edit; keep the (empty) prediction as-is.
            edited.append(FacetSet(query=fs.query, facets=[], stage="edited", parse_ok=False))
            continue
        req = EditRequest(query=fs.query, predicted_facets=fs, demonstrations=demos)
        edited.append(
            editing.edit_facets(
                config.llm_backend,
                req,
                style=config.marker_style,
                max_new_tokens=config.max_new_tokens,
                max_facets=config.max_facets,
                seed=config.seed,
            )
        )
    _write_predictions(run_dir / PREDICTIONS_EDITED, edited)
    return edited


def _stage_score(config: ExperimentConfig, corpus: Corpus, run_dir: Path, final_file: str):
    gold = [FacetSet(query=r.query, facets=list(r.facets), stage="gold") for r in corpus.records]
    _write_predictions(run_dir / GOLD_FILE, gold)
    similarity = metrics.make_similarity_backend(
        config.similarity_kind, config.similarity_endpoint or None
    )
    report = metrics.score_run(run_dir / final_file, run_dir / GOLD_FILE, similarity)
    (run_dir / METRICS_FILE).write_text(report.to_json(), encoding="utf-8")
    return report


def _stage_judge(config: ExperimentConfig, edited, small, run_dir: Path):
    rows = []
    verdicts = []
    for e_set, s_set in zip(edited, small):
        if not e_set.facets or not s_set.facets:
            continue
        verdict = editing.judge_pair(
            config.judge_backend,
            e_set.query,
            e_set,
            s_set,
            style=config.marker_style,
            randomize_order=config.judge_randomize_order,
            seed=config.seed,
        )
        verdicts.append(verdict)
        rows.append((e_set.query, "edited", "small", verdict))
    editing.write_judge_jsonl(run_dir / JUDGE_FILE, rows)
    return editing.aggregate_verdicts(verdicts).to_dict()


def run_experiment(
    config: ExperimentConfig, corpus: Corpus, *, run_id: str | None = None
) -> RunManifest:
    """Execute generate -> [edit] -> score -> [judge]; persist everything."""
    if not corpus.records:
        raise DataError("empty corpus")
    runs_dir = Path(config.runs_dir)
    runs_dir.mkdir(parents=True, exist_ok=True)
    if run_id is None:
        base = f"{_utc_stamp()}-{config.config_hash()[:8]}"
        run_id, n = base, 1
        while (runs_dir / run_id).exists():
            n += 1
            run_id = f"{base}-{n}"
    run_dir = runs_dir / run_id
    run_dir.mkdir(parents=True)

    manifest = RunManifest(
        run_id=run_id,
        run_dir=str(run_dir),
        created_utc=_utc_now(),
        config=config.to_canonical_dict(),
        config_hash=config.config_hash(),
        corpus_hash=_corpus_hash(corpus),
        seed=config.seed,
        template_hashes=editing.template_hashes(),
    )

    def record_stage(name: str, artifacts: list[str], **extra) -> None:
        manifest.stages.append(
            {"name": name, "status": "ok", "finished_utc": _utc_now(), "artifacts": artifacts}
            | extra
        )

    try:
        stage_label, small_sets = _stage_generate(config, corpus, run_dir, manifest)
        record_stage(stage_label, [PREDICTIONS_SMALL])

        final_file = PREDICTIONS_SMALL
        edited_sets = None
        if config.editing == "edit":
            edited_sets = _stage_edit(config, small_sets, run_dir, manifest)
            record_stage("edit", [PREDICTIONS_EDITED])
            final_file = PREDICTIONS_EDITED

        report = _stage_score(config, corpus, run_dir, final_file)
        record_stage("score", [GOLD_FILE, METRICS_FILE], scored_file=final_file)
        logger.info("run %s scored: %s", run_id, report.to_dict())

        if config.judge_enabled and edited_sets is not None:
            win = _stage_judge(config, edited_sets, small_sets, run_dir)
            record_stage("judge", [JUDGE_FILE], win_report=win)
    except Exception as exc:
        manifest.stages.append(
            {"name": "failed", "status": "error", "finished_utc": _utc_now(), "cause": str(exc)}
        )
        manifest.save()
        raise

    for name in sorted(p.name for p in run_dir.iterdir() if p.name != MANIFEST_FILE):
        manifest.artifacts[name] = sha256_file(run_dir / name)
    manifest.save()
    return manifest


def verify_run(run_dir: str | Path) -> bool:
    """Re-hash a run directory and check it matches its manifest exactly."""
    run_dir = Path(run_dir)
    manifest = RunManifest.load(run_dir)
    on_disk = {p.name for p in run_dir.iterdir() if p.name != MANIFEST_FILE}
    listed = set(manifest.artifacts)
    if on_disk != listed:
        raise DataError(
            f"{run_dir}: artifact mismatch; unlisted={sorted(on_disk - listed)} "
            f"missing={sorted(listed - on_disk)}"
        )
    for name, expected in manifest.artifacts.items():
        actual = sha256_file(run_dir / name)
        if actual != expected:
            raise DataError(f"{run_dir}/{name}: hash mismatch")
    return True


def report(run_dirs: Sequence[str | Path]) -> str:
    """Aligned metrics/stats table, one row per run, in the given order."""
    rows = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        manifest = RunManifest.load(run_dir)
        metrics_path = run_dir / METRICS_FILE
        if not metrics_path.exists():
            raise DataError(f"run {manifest.run_id} has no score stage")
        raw = json.loads(metrics_path.read_text(encoding="utf-8"))
        stats = metrics.FacetSetStats(**raw["stats"])
        rows.append(
            (
                manifest.run_id,
                metrics.MetricReport(
                    term_overlap_f1=raw["term_overlap_f1"],
                    exact_match_f1=raw["exact_match_f1"],
                    set_bleu_mean=raw["set_bleu_mean"],
                    set_bertscore_f1=raw["set_bertscore_f1"],
                    stats=stats,
                    num_queries=raw["num_queries"],
                ),
            )
        )
    return metrics.format_report_table(rows)


def _final_predictions(run_dir: Path) -> Path:
    edited = run_dir / PREDICTIONS_EDITED
    return edited if edited.exists() else run_dir / PREDICTIONS_SMALL


def compare(
    run_a: str | Path,
    run_b: str | Path,
    judge_backend: BackendConfig,
    *,
    out_dir: str | Path | None = None,
    style: str = "user_assistant",
    randomize_order: bool = False,
    seed: int = 0,
) -> dict:
    """Judge run A's final facet sets against run B's, query by query."""
    run_a, run_b = Path(run_a), Path(run_b)
    preds_a = metrics.read_predictions_jsonl(_final_predictions(run_a))
    preds_b = metrics.read_predictions_jsonl(_final_predictions(run_b))
    if set(preds_a) != set(preds_b):
        diff = sorted(set(preds_a) ^ set(preds_b))
        raise DataError(f"runs cover different queries; symmetric difference: {diff}")

    name_a, name_b = run_a.name, run_b.name
    rows, verdicts, skipped = [], [], 0
    for query in preds_a:
        if not preds_a[query] or not preds_b[query]:
            skipped += 1
            continue
        verdict = editing.judge_pair(
            judge_backend,
            query,
            preds_a[query],
            preds_b[query],
            style=style,
            randomize_order=randomize_order,
            seed=seed,
        )
        verdicts.append(verdict)
        rows.append((query, name_a, name_b, verdict))

    win = editing.aggregate_verdicts(verdicts).to_dict()
    win["model_a"] = name_a
    win["model_b"] = name_b
    win["skipped_empty"] = skipped
    if out_dir is None:
        out_dir = run_a.parent / f"compare-{_utc_stamp()}-{name_a[-8:]}-vs-{name_b[-8:]}"
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    editing.write_judge_jsonl(out_dir / JUDGE_FILE, rows)
    (out_dir / "win.json").write_text(
        json.dumps(win, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    return win
