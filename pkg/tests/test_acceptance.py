"""Acceptance suite: one test per release criterion.

Each criterion is checked at its stated tolerance; the conftest summary
hook prints one PASS/FAIL line per criterion at the end of the run.
Everything here runs against mock or scripted local backends.
"""

from __future__ import annotations

import math
import random
import time

import pytest

from facetpipe import cli
from facetpipe.backend import BackendConfig, GenerationRequest, generate, generate_batch
from facetpipe.editing import (
    Demonstration,
    EditRequest,
    JudgeVerdict,
    aggregate_verdicts,
    parse_facet_response,
    render_edit_prompt,
    render_few_shot_prompt,
    render_judge_prompt,
    render_zero_shot_prompt,
)
from facetpipe.errors import FatalRequestError
from facetpipe.metrics import (
    exact_match_f1,
    facet_set_stats,
    set_bertscore_f1,
    set_bleu_mean,
    term_overlap_f1,
)
from facetpipe.taskgen import LossInput, build_target, cross_entropy, multi_task_loss, parse_target

from .conftest import read_golden, write_toy_config
from .fakeserver import CompletionServer
from .oracles import (
    oracle_exact_match_f1,
    oracle_set_bleu_mean,
    oracle_term_overlap_f1,
    random_facet_sets,
)


def test_metric_oracle_equivalence():
    """200 seeded random instances match the brute-force oracles."""
    started = time.monotonic()
    rng = random.Random(20240501)
    checked = 0
    while checked < 200:
        pred, gold = random_facet_sets(rng, max_facets=5, max_tokens=4, vocab_size=10)
        checked += 1
        assert abs(term_overlap_f1(pred, gold) - oracle_term_overlap_f1(pred, gold)) <= 1e-12
        assert abs(exact_match_f1(pred, gold) - oracle_exact_match_f1(pred, gold)) <= 1e-12
        assert abs(set_bleu_mean(pred, gold) - oracle_set_bleu_mean(pred, gold)) <= 1e-9
    assert time.monotonic() - started < 5.0


def test_identity_and_disjoint_suite():
    identical = ["warcraft game", "warcraft movie", "warcraft book"]
    assert term_overlap_f1(identical, identical) == 1.0
    assert exact_match_f1(identical, identical) == 1.0
    assert set_bleu_mean(identical, identical) == 1.0
    assert set_bertscore_f1(identical, identical) == 1.0

    pred = ["aaa bbb", "ccc"]
    gold = ["xxx yyy", "zzz"]  # token- and trigram-disjoint from pred
    assert term_overlap_f1(pred, gold) == 0.0
    assert exact_match_f1(pred, gold) == 0.0
    assert set_bleu_mean(pred, gold) <= 1e-6
    assert set_bertscore_f1(pred, gold) == 0.0


def test_permutation_invariance():
    rng = random.Random(31)
    instances = []
    while len(instances) < 5:
        pred, gold = random_facet_sets(rng, max_facets=6)
        if pred:
            instances.append((pred, gold))
    for pred, gold in instances:
        reference = (
            term_overlap_f1(pred, gold),
            exact_match_f1(pred, gold),
            set_bleu_mean(pred, gold),
            set_bertscore_f1(pred, gold),
        )
        for _ in range(20):  # 5 instances x 20 = 100 seeded shuffles
            p, g = list(pred), list(gold)
            rng.shuffle(p)
            rng.shuffle(g)
            outcome = (
                term_overlap_f1(p, g),
                exact_match_f1(p, g),
                set_bleu_mean(p, g),
                set_bertscore_f1(p, g),
            )
            assert outcome == reference


def test_prompt_golden_files():
    demos = [
        Demonstration(
            query="carrots",
            predicted=["carrots for sale", "carrots care"],
            labels=["grow carrots", "cook carrots", "store carrots", "freeze carrots"],
        ),
        Demonstration(
            query="orange",
            predicted=["orange tree", "orange flower"],
            labels=["orange the color", "orange the fruit", "orange the company"],
        ),
    ]
    request = EditRequest(
        query="firewall",
        predicted_facets=["firewall windows 10", "windows 7", "windows 8", "windows xp"],
        demonstrations=demos,
    )
    judge_args = ("orange", ["orange fruit", "orange juice"], ["orange tree", "orange flower"])
    for style, suffix in (("user_assistant", ""), ("instruction_response", ".instruction_response")):
        assert render_edit_prompt(request, style=style).text == read_golden(
            f"edit_prompt{suffix}.txt"
        )
        assert render_zero_shot_prompt("carrots", style=style).text == read_golden(
            f"zero_shot_prompt{suffix}.txt"
        )
        assert render_few_shot_prompt("firewall", demos, style=style).text == read_golden(
            f"few_shot_prompt{suffix}.txt"
        )
        assert render_judge_prompt(*judge_args, style=style).text == read_golden(
            f"judge_prompt{suffix}.txt"
        )


def test_round_trips():
    rng = random.Random(500)
    alphabet = "abcdefghijklmnop 0123456789"
    produced = 0
    while produced < 500:
        items = []
        for _ in range(rng.randint(1, 8)):
            item = "".join(rng.choices(alphabet, k=rng.randint(1, 14))).strip()
            if item and "," not in item:
                items.append(item)
        if not items:
            continue
        produced += 1
        assert parse_target(build_target(items)) == [i.strip() for i in items]
        if len(items) <= 10:
            wrapped = f"`{build_target(items)}`"
            assert parse_facet_response(wrapped, "any query").facets == [i.strip() for i in items]


def test_loss_contract():
    perfect = cross_entropy(
        LossInput(target_token_ids=[0, 1, 2], predicted_distributions=[
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ])
    )
    assert perfect.value == 0.0

    uniform = [0.25] * 4
    loss = cross_entropy(
        LossInput(target_token_ids=[3, 1], predicted_distributions=[uniform, uniform])
    )
    assert abs(loss.value - math.log(4)) <= 1e-9

    assert multi_task_loss({"facet": 0.5, "document": 0.25}) == 0.5 + 0.25


def test_judge_aggregation():
    fixture = (
        [JudgeVerdict("A", "A")] * 60
        + [JudgeVerdict("B", "B")] * 30
        + [JudgeVerdict("excluded", "Both are fine")] * 10
    )
    report = aggregate_verdicts(fixture)
    assert abs(report.win_ratio_a - 66.67) <= 0.01
    assert report.excluded == 10

    rng = random.Random(1000)
    done = 0
    while done < 1000:
        verdicts = [
            JudgeVerdict(rng.choice(["A", "B", "excluded"]), "raw")
            for _ in range(rng.randint(1, 25))
        ]
        if not any(v.outcome in ("A", "B") for v in verdicts):
            continue
        done += 1
        report = aggregate_verdicts(verdicts)
        assert report.wins_a + report.wins_b + report.excluded == len(verdicts)


def test_stats_duplicates():
    deduped = facet_set_stats([["a b", "c d"], ["e", "f g"]], ["q1", "q2"])
    assert deduped.duplicate_proportion == 0.0
    one_dup = facet_set_stats([["a b", "a b", "c d", "e f"]], ["q"])
    assert one_dup.duplicate_proportion == 0.25


def test_deterministic_end_to_end(tmp_path, toy_test_corpus):
    started = time.monotonic()
    config_path = write_toy_config(tmp_path, editing="edit", seed=7)
    for run_id in ("run-one", "run-two"):
        rc = cli.main(
            [
                "--config",
                str(config_path),
                "--seed",
                "7",
                "--mock",
                "run",
                "--corpus",
                str(toy_test_corpus),
                "--run-id",
                run_id,
            ]
        )
        assert rc == 0
    runs = tmp_path / "runs"
    for name in ("predictions.small.jsonl", "predictions.edited.jsonl", "metrics.json"):
        one = (runs / "run-one" / name).read_bytes()
        two = (runs / "run-two" / name).read_bytes()
        assert one == two, f"{name} differs between identical runs"
    assert time.monotonic() - started < 10.0


def test_backend_discipline():
    # Retry count: two 500s then success -> 3 attempts.
    with CompletionServer(script=[(500, 0), (500, 0), (200, 0)]) as server:
        config = BackendConfig(kind="http", endpoint_url=server.url, max_retries=2)
        out = generate(config, GenerationRequest(prompt="hello", seed=0))
        assert out.attempt_count == 3
        # Backoff lower bounds: gaps >= 250ms and 500ms minus the jitter bound.
        times = server.state.request_times
        assert times[1] - times[0] >= 0.250 * 0.9 - 0.01
        assert times[2] - times[1] >= 0.500 * 0.9 - 0.01

    # 4xx is fatal: one attempt, no retry.
    with CompletionServer(script=[(404, 0)]) as server:
        config = BackendConfig(kind="http", endpoint_url=server.url, max_retries=3)
        with pytest.raises(FatalRequestError):
            generate(config, GenerationRequest(prompt="hello", seed=0))
        assert server.state.request_count == 1

    # Order preservation under randomized completion delays.
    rng = random.Random(42)
    with CompletionServer(script=[(200, rng.uniform(0, 0.06)) for _ in range(10)]) as server:
        config = BackendConfig(kind="http", endpoint_url=server.url, max_concurrency=5)
        prompts = [f"p{i}" for i in range(10)]
        responses = generate_batch(
            config, [GenerationRequest(prompt=p, seed=0) for p in prompts]
        )
        assert [r.text for r in responses] == [f"echo:{p}" for p in prompts]

    # Peak in-flight bounded by max_concurrency.
    with CompletionServer(script=[(200, 0.05)] * 12) as server:
        config = BackendConfig(kind="http", endpoint_url=server.url, max_concurrency=3)
        generate_batch(config, [GenerationRequest(prompt=f"p{i}", seed=0) for i in range(12)])
        assert server.state.peak_in_flight <= 3
