"""FacetSet: an ordered list of facet strings for one query."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class FacetSet:
    """Facets proposed (or labeled) for a single query.

    ``stage`` records provenance: "small" for the fine-tuned generator,
    "edited" after LLM editing, "llm" for direct zero/few-shot generation,
    "gold" for ground-truth labels.  When a set was produced by editing,
    ``source_facets`` keeps the pre-edit facets alongside.
    """

    query: str
    facets: list[str] = field(default_factory=list)
    stage: str = "small"
    parse_ok: bool = True
    source_facets: list[str] | None = None

    def __len__(self) -> int:
        return len(self.facets)

    def __iter__(self):
        return iter(self.facets)


def as_facet_list(value) -> list[str]:
    """Accept a FacetSet or a plain sequence of strings."""
    if isinstance(value, FacetSet):
        return list(value.facets)
    return list(value)
