"""Tour of the four facet-set metrics on small worked examples.

    python3 demos/metrics_walkthrough.py
"""

from __future__ import annotations

from facetpipe.metrics import (
    TrigramCosineSimilarity,
    exact_match_f1,
    facet_set_stats,
    normalize,
    set_bertscore_f1,
    set_bleu_mean,
    term_overlap_f1,
)

PRED = ["warcraft movie", "warcraft characters"]
GOLD = ["warcraft game", "warcraft movie"]


def main() -> None:
    print("predicted:", PRED)
    print("gold:     ", GOLD)
    print()

    print("normalization keeps interior punctuation, strips edges:")
    print("  'Fire-wall's setup!' ->", normalize("Fire-wall's setup!").tokens)
    print()

    print(f"term overlap F1   {term_overlap_f1(PRED, GOLD):.4f}"
          "   (pooled unique tokens: precision/recall over term bags)")
    print(f"exact match F1    {exact_match_f1(PRED, GOLD):.4f}"
          "   (whole normalized facet strings)")
    print(f"set BLEU-mean     {set_bleu_mean(PRED, GOLD):.4f}"
          "   (per facet: mean of BLEU-1..4 against all gold facets)")
    print(f"set BERTScore F1  {set_bertscore_f1(PRED, GOLD):.4f}"
          "   (greedy max-similarity matching, trigram cosine backend)")
    print()

    sim = TrigramCosineSimilarity()
    print("similarity backend spot checks:")
    for a, b in [("orange fruit", "orange fruit"), ("orange fruit", "orange tree"), ("xxx", "yyy")]:
        print(f"  sim({a!r}, {b!r}) = {sim.similarity(a, b):.4f}")
    print()

    stats = facet_set_stats([PRED, ["a b", "a b", "c d", "e f"]], ["warcraft", "q2"])
    print("set statistics over both sets:")
    for key, value in stats.to_dict().items():
        print(f"  {key}: {value}")


if __name__ == "__main__":
    main()
