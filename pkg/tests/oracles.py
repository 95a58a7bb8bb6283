"""Brute-force reference implementations used to cross-check the metrics.

These are deliberately written from the metric definitions with plain
loops and no shared code with facetpipe.metrics, so the two sides can
disagree when one of them is wrong.
"""

from __future__ import annotations

import math
import re

_EDGE_PUNCT = re.compile(r"^[^0-9a-z]+|[^0-9a-z]+$", re.IGNORECASE)


def oracle_tokens(facet: str) -> list[str]:
    out = []
    for piece in facet.lower().split():
        cleaned = _EDGE_PUNCT.sub("", piece)
        if cleaned:
            out.append(cleaned)
    return out


def oracle_normalized_string(facet: str) -> str:
    return " ".join(oracle_tokens(facet))


def _harmonic(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def oracle_term_overlap_f1(pred: list[str], gold: list[str]) -> float:
    pred_terms = set()
    for f in pred:
        for t in oracle_tokens(f):
            pred_terms.add(t)
    gold_terms = set()
    for f in gold:
        for t in oracle_tokens(f):
            gold_terms.add(t)
    overlap = 0
    for t in pred_terms:
        if t in gold_terms:
            overlap += 1
    p = overlap / len(pred_terms) if pred_terms else 0.0
    r = overlap / len(gold_terms) if gold_terms else 0.0
    return _harmonic(p, r)


def oracle_exact_match_f1(pred: list[str], gold: list[str]) -> float:
    pred_set = {oracle_normalized_string(f) for f in pred}
    gold_set = {oracle_normalized_string(f) for f in gold}
    k = len([s for s in pred_set if s in gold_set])
    p = k / len(pred_set) if pred_set else 0.0
    r = k / len(gold_set) if gold_set else 0.0
    return _harmonic(p, r)


def _ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def oracle_set_bleu_mean(pred: list[str], gold: list[str], eps: float = 1e-9) -> float:
    refs = [oracle_tokens(g) for g in gold]
    if not pred:
        return 0.0
    per_facet = []
    for facet in pred:
        cand = oracle_tokens(facet)
        if not cand:
            per_facet.append(0.0)
            continue
        # closest reference length, ties to the shorter one
        best_ref_len = None
        for ref in refs:
            if best_ref_len is None:
                best_ref_len = len(ref)
            else:
                old = (abs(best_ref_len - len(cand)), best_ref_len)
                new = (abs(len(ref) - len(cand)), len(ref))
                if new < old:
                    best_ref_len = len(ref)
        bp = min(1.0, math.exp(1.0 - best_ref_len / len(cand)))
        precisions = []
        bleu_scores = []
        for n in range(1, 5):
            cand_grams = _ngrams(cand, n)
            if not cand_grams:
                break
            clipped = 0
            for gram in set(cand_grams):
                cand_count = cand_grams.count(gram)
                max_ref = 0
                for ref in refs:
                    c = _ngrams(ref, n).count(gram)
                    if c > max_ref:
                        max_ref = c
                clipped += min(cand_count, max_ref)
            p = clipped / len(cand_grams)
            if p == 0.0:
                p = eps
            precisions.append(p)
            product = 1.0
            for q in precisions:
                product *= q
            bleu_scores.append(bp * product ** (1.0 / n))
        per_facet.append(sum(bleu_scores) / len(bleu_scores) if bleu_scores else 0.0)
    return sum(per_facet) / len(per_facet)


def oracle_trigram_cosine(a: str, b: str) -> float:
    def grams(s: str) -> dict[str, int]:
        if not s:
            return {}
        padded = "##" + s.lower() + "##"
        counts: dict[str, int] = {}
        for i in range(len(padded) - 2):
            g = padded[i : i + 3]
            counts[g] = counts.get(g, 0) + 1
        return counts

    ga, gb = grams(a), grams(b)
    dot = sum(ga[g] * gb[g] for g in ga if g in gb)
    if dot == 0:
        return 0.0
    na = sum(v * v for v in ga.values())
    nb = sum(v * v for v in gb.values())
    return dot / math.sqrt(na * nb)


def oracle_set_bertscore_f1(pred: list[str], gold: list[str]) -> float:
    if not pred:
        return 0.0
    p_scores = []
    for c in pred:
        p_scores.append(max(oracle_trigram_cosine(c, r) for r in gold))
    r_scores = []
    for r in gold:
        r_scores.append(max(oracle_trigram_cosine(c, r) for c in pred))
    precision = sum(p_scores) / len(p_scores)
    recall = sum(r_scores) / len(r_scores)
    return _harmonic(precision, recall)


def random_facet_sets(rng, max_facets=5, max_tokens=4, vocab_size=10):
    """One random (pred, gold) instance over a tiny shared vocabulary."""
    vocab = [f"w{i}" for i in range(vocab_size)]

    def one_set(min_facets: int) -> list[str]:
        facets = []
        for _ in range(rng.randint(min_facets, max_facets)):
            n = rng.randint(1, max_tokens)
            facets.append(" ".join(rng.choice(vocab) for _ in range(n)))
        return facets

    return one_set(0), one_set(1)  # gold must be non-empty
