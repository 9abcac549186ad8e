"""Pareto front construction, front peeling, and rank-based truncation.

Both objectives are maximized internally. A minimized quantity such as
parameter count enters negated, with the raw value kept alongside for
reporting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from .network_ir import NetworkGraph, count_parameters


@dataclass(frozen=True)
class ObjectiveVector:
    primary: float
    secondary: float
    raw_secondary: float = 0.0

    @classmethod
    def of(cls, primary: float, raw_secondary: float, *, minimize_secondary: bool = True):
        sec = -raw_secondary if minimize_secondary else raw_secondary
        return cls(primary, sec, raw_secondary)

    def dominates(self, other: "ObjectiveVector") -> bool:
        """Weak Pareto dominance: at least as good in both, better in one."""
        return (
            self.primary >= other.primary
            and self.secondary >= other.secondary
            and (self.primary > other.primary or self.secondary > other.secondary)
        )


def pareto_front(
    entries: Sequence[tuple[Any, ObjectiveVector]], *, secondary_sort: bool = False
) -> list[tuple[Any, ObjectiveVector]]:
    """Single sweep front construction.

    Entries are sorted by descending primary with descending secondary as the
    tie-break, then an entry joins the front exactly when its secondary
    strictly exceeds the last front member's. Duplicate objective vectors
    therefore keep one representative. ``secondary_sort`` optionally reorders
    the finished front by descending secondary.
    """
    if not entries:
        return []
    order = sorted(entries, key=lambda e: (-e[1].primary, -e[1].secondary))
    front = [order[0]]
    for entry in order[1:]:
        if entry[1].secondary > front[-1][1].secondary:
            front.append(entry)
    if secondary_sort:
        front.sort(key=lambda e: -e[1].secondary)
    return front


def peel_fronts(
    entries: Sequence[tuple[Any, ObjectiveVector]]
) -> list[list[tuple[Any, ObjectiveVector]]]:
    """Partition entries into successive Pareto fronts (best front first).

    Each pass removes the current front and re-runs construction on what is
    left, so every entry lands in exactly one front and the loop always
    terminates because a front is never empty.
    """
    indexed = list(enumerate(entries))
    wrapped = [((i, e[0]), e[1]) for i, e in indexed]
    fronts: list[list[tuple[Any, ObjectiveVector]]] = []
    remaining = wrapped
    while remaining:
        front = pareto_front(remaining)
        taken = {payload[0] for payload, _ in front}
        fronts.append([(payload[1], vec) for payload, vec in front])
        remaining = [w for w in remaining if w[0][0] not in taken]
    return fronts


def rank_by_fronts(
    entries: Sequence[tuple[Any, ObjectiveVector]]
) -> tuple[list[Any], list[int]]:
    """Flatten peeled fronts into one ranked order.

    Returns the payloads best first plus each payload's 1-based front index.
    """
    ranked: list[Any] = []
    front_indices: list[int] = []
    for depth, front in enumerate(peel_fronts(entries), start=1):
        for payload, _ in front:
            ranked.append(payload)
            front_indices.append(depth)
    return ranked, front_indices


def truncate_ranked(ranked: Sequence[Any], fraction: float) -> list[Any]:
    """Drop the bottom ``fraction`` of an already ranked sequence.

    At least one survivor always remains.
    """
    if not ranked:
        return []
    keep = len(ranked) - math.floor(fraction * len(ranked))
    return list(ranked[: max(1, keep)])


def rank_species_multiobjective(
    members: Sequence[Any],
    objectives: Sequence[ObjectiveVector],
    truncation_fraction: float = 0.0,
) -> list[Any]:
    """Order species members by successive fronts, then truncate the tail."""
    if len(members) != len(objectives):
        raise ValueError("each member needs exactly one objective vector")
    ranked, _ = rank_by_fronts(list(zip(members, objectives)))
    return truncate_ranked(ranked, truncation_fraction)


def complexity_objective(net: NetworkGraph, input_shape: tuple[int, ...] | None = None) -> int:
    """Raw secondary objective value: total trainable parameters."""
    return count_parameters(net, input_shape)


def front_covers(
    front: Iterable[ObjectiveVector], other: Iterable[ObjectiveVector]
) -> bool:
    """True when every vector in ``other`` is weakly dominated by or equal to
    some vector in ``front``."""
    mine = list(front)
    for vec in other:
        if not any(m.dominates(vec) or (m.primary == vec.primary and m.secondary == vec.secondary) for m in mine):
            return False
    return True
