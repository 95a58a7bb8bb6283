"""Command-line entry point.

Subcommands: ingest, build-tasks, generate, edit, evaluate, judge,
stats, report, run.  Exit codes: 0 success, 2 config error, 3 backend
error, 4 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import editing, metrics, pipeline, taskgen
from .errors import BackendError, ConfigError, DataError, FacetPipeError
from .facets import FacetSet

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_DATA = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facetpipe", description=__doc__)
    parser.add_argument("--config", help="TOML experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--mock", action="store_true", help="force all backends to mock")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a clarification TSV (optionally attach SERP data)")
    p.add_argument("--tsv", required=True)
    p.add_argument("--split", required=True, choices=corpus_mod.SPLITS)
    p.add_argument("--serp", default=None)
    p.add_argument("--max-snippets", type=int, default=corpus_mod.DEFAULT_MAX_SNIPPETS)
    p.add_argument("--snippet-path", default=corpus_mod.DEFAULT_SNIPPET_PATH)
    p.add_argument("--related-path", default=corpus_mod.DEFAULT_RELATED_PATH)
    p.add_argument("--out", required=True, help="corpus JSONL output path")

    p = sub.add_parser("build-tasks", help="export multi-task training examples as JSONL")
    p.add_argument("--corpus", required=True)
    p.add_argument("--tasks", default="facet", help="comma list: facet,document,related")
    p.add_argument("--mode", default="Q", choices=("Q", "QD"))
    p.add_argument("--out", required=True)

    p = sub.add_parser("generate", help="run the generation stage over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="predictions JSONL output path")

    p = sub.add_parser("edit", help="LLM-edit a predictions file")
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", default=None, help="metrics JSON output path")

    p = sub.add_parser("judge", help="pairwise-judge two prediction files")
    p.add_argument("--pred-a", required=True)
    p.add_argument("--pred-b", required=True)
    p.add_argument("--out", default=None, help="judge JSONL output path")

    p = sub.add_parser("stats", help="facet-set statistics of a predictions file")
    p.add_argument("--pred", required=True)

    p = sub.add_parser("report", help="metrics table for one or more runs")
    p.add_argument("runs", nargs="+", help="run directories")

    p = sub.add_parser("run", help="composite: generate -> [edit] -> score -> [judge]")
    p.add_argument("--corpus", required=True, help="evaluation corpus JSONL")
    p.add_argument("--run-id", default=None)

    return parser


def _need_config(args) -> pipeline.ExperimentConfig:
    if not args.config:
        raise ConfigError("this command needs --config")
    return pipeline.load_config(args.config, seed=args.seed, mock=args.mock)


def _cmd_ingest(args) -> int:
    corpus = corpus_mod.parse_mimics_tsv(args.tsv, args.split)
    if args.serp:
        corpus = corpus_mod.attach_serp(
            corpus,
            args.serp,
            max_snippets=args.max_snippets,
            snippet_path=args.snippet_path,
            related_path=args.related_path or None,
        )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest_path = corpus_mod.save_corpus(corpus, out)
    summary = corpus_mod.corpus_summary(corpus)
    print(f"wrote {out} and {manifest_path}")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _cmd_build_tasks(args) -> int:
    corpus = corpus_mod.load_corpus(args.corpus)
    tasks = [t.strip() for t in args.tasks.split(",") if t.strip()]
    examples = taskgen.build_taskset(corpus, tasks, args.mode)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    taskgen.write_taskset_jsonl(examples, out)
    counts = {}
    for ex in examples:
        counts[ex.task.value] = counts.get(ex.task.value, 0) + 1
    print(f"wrote {len(examples)} examples to {out} ({counts})")
    return EXIT_OK


def _write_sets(path: Path, sets) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for fs in sets:
            fh.write(
                json.dumps({"query": fs.query, "facets": list(fs.facets)}, ensure_ascii=False)
                + "\n"
            )


def _cmd_generate(args) -> int:
    config = _need_config(args)
    corpus = corpus_mod.load_corpus(args.corpus)
    from .backend import generate_batch

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
    responses = generate_batch(
        config.small_backend, [pipeline._generation_request(config, p) for p in prompts]
    )
    sets = [
        editing.parse_facet_response(resp.text, r.query, max_facets=config.max_facets, stage="small")
        for r, resp in zip(corpus.records, responses)
    ]
    _write_sets(Path(args.out), sets)
    print(f"wrote {len(sets)} predictions to {args.out}")
    return EXIT_OK


def _cmd_edit(args) -> int:
    config = _need_config(args)
    preds = metrics.read_predictions_jsonl(args.pred)
    demos = pipeline.resolve_demonstrations(config)
    edited = []
    for query, facets in preds.items():
        if not facets:
            edited.append(FacetSet(query=query, facets=[], stage="edited", parse_ok=False))
            continue
        req = editing.EditRequest(query=query, predicted_facets=facets, demonstrations=demos)
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
    _write_sets(Path(args.out), edited)
    print(f"wrote {len(edited)} edited predictions to {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    similarity = None
    if args.config:
        config = _need_config(args)
        similarity = metrics.make_similarity_backend(
            config.similarity_kind, config.similarity_endpoint or None
        )
    report = metrics.score_run(args.pred, args.gold, similarity)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    print(report.to_json(), end="")
    return EXIT_OK


def _cmd_judge(args) -> int:
    config = _need_config(args)
    preds_a = metrics.read_predictions_jsonl(args.pred_a)
    preds_b = metrics.read_predictions_jsonl(args.pred_b)
    if set(preds_a) != set(preds_b):
        diff = sorted(set(preds_a) ^ set(preds_b))
        raise DataError(f"prediction files cover different queries: {diff}")
    rows, verdicts = [], []
    for query in preds_a:
        if not preds_a[query] or not preds_b[query]:
            continue
        verdict = editing.judge_pair(
            config.judge_backend,
            query,
            preds_a[query],
            preds_b[query],
            style=config.marker_style,
            randomize_order=config.judge_randomize_order,
            seed=config.seed,
        )
        verdicts.append(verdict)
        rows.append((query, Path(args.pred_a).name, Path(args.pred_b).name, verdict))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        editing.write_judge_jsonl(args.out, rows)
    win = editing.aggregate_verdicts(verdicts)
    print(
        f"A wins {win.win_ratio_a:.2f}% ({win.wins_a}), "
        f"B wins {win.win_ratio_b:.2f}% ({win.wins_b}), excluded {win.excluded}"
    )
    return EXIT_OK


def _cmd_stats(args) -> int:
    preds = metrics.read_predictions_jsonl(args.pred)
    stats = metrics.facet_set_stats(list(preds.values()), list(preds))
    print(json.dumps(stats.to_dict(), indent=2))
    return EXIT_OK


def _cmd_report(args) -> int:
    print(pipeline.report(args.runs))
    return EXIT_OK


def _cmd_run(args) -> int:
    config = _need_config(args)
    corpus = corpus_mod.load_corpus(args.corpus)
    manifest = pipeline.run_experiment(config, corpus, run_id=args.run_id)
    print(f"run {manifest.run_id} finished; artifacts in {manifest.run_dir}")
    metrics_path = Path(manifest.run_dir) / pipeline.METRICS_FILE
    print(metrics_path.read_text(encoding="utf-8"), end="")
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "build-tasks": _cmd_build_tasks,
    "generate": _cmd_generate,
    "edit": _cmd_edit,
    "evaluate": _cmd_evaluate,
    "judge": _cmd_judge,
    "stats": _cmd_stats,
    "report": _cmd_report,
    "run": _cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FacetPipeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
