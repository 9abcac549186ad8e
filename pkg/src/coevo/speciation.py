"""Species partitioning, offspring allocation, and within-species reproduction."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .genome import (
    ChromosomeGraph,
    CompatibilityCoefficients,
    InnovationRegistry,
    MODULE,
    MutationPolicy,
    chromosome_from_dict,
    chromosome_to_dict,
    compatibility_distance,
    crossover,
    mutate_chromosome,
)
from .multiobjective import truncate_ranked
from .search_space import SearchSpace

# Compatibility threshold never adjusts below this.
MIN_THRESHOLD = 1e-6


@dataclass
class Species:
    id: int
    representative: ChromosomeGraph
    members: list[ChromosomeGraph] = field(default_factory=list)
    staleness: int = 0
    best_fitness: float | None = None
    mean_fitness: float | None = None

    def member_ids(self) -> list[int]:
        return [m.id for m in self.members]


@dataclass
class Population:
    """All species of one chromosome kind plus the speciation knobs."""

    kind: str
    species: list[Species] = field(default_factory=list)
    target_species_count: int = 4
    compatibility_threshold: float = 1.0
    next_species_id: int = 1

    def all_members(self) -> list[ChromosomeGraph]:
        return [m for sp in self.species for m in sp.members]

    def species_ids(self) -> tuple[int, ...]:
        return tuple(sp.id for sp in self.species)

    def find_species(self, species_id: int) -> Species | None:
        for sp in self.species:
            if sp.id == species_id:
                return sp
        return None

    def best_member(self) -> ChromosomeGraph | None:
        best = None
        for m in self.all_members():
            if m.fitness is None:
                continue
            if best is None or m.fitness > best.fitness:
                best = m
        return best


def speciate(
    population: Population,
    chromosomes: list[ChromosomeGraph],
    coeff: CompatibilityCoefficients,
    space: SearchSpace,
) -> Population:
    """Assign chromosomes to species and nudge the threshold toward the target.

    Each chromosome joins the first existing species (ascending id order)
    whose representative lies within the compatibility threshold, otherwise
    it founds a new species and becomes its representative. Untouched species
    disappear; surviving species adopt their first assigned member as the
    next representative. Afterwards the threshold moves 10% up when there
    are too many species and 10% down when there are too few.
    """
    population.species.sort(key=lambda sp: sp.id)
    buckets: dict[int, list[ChromosomeGraph]] = {sp.id: [] for sp in population.species}
    reps: list[tuple[int, ChromosomeGraph]] = [
        (sp.id, sp.representative) for sp in population.species
    ]
    fresh: list[Species] = []
    for chrom in chromosomes:
        placed = False
        for sid, rep in reps:
            if compatibility_distance(chrom, rep, coeff, space) <= population.compatibility_threshold:
                buckets[sid].append(chrom)
                placed = True
                break
        if not placed:
            sp = Species(population.next_species_id, representative=chrom, members=[chrom])
            population.next_species_id += 1
            fresh.append(sp)
            reps.append((sp.id, chrom))
            buckets[sp.id] = sp.members

    survivors: list[Species] = []
    for sp in population.species:
        assigned = buckets[sp.id]
        if not assigned:
            continue
        sp.members = assigned
        sp.representative = assigned[0]
        survivors.append(sp)
    population.species = survivors + fresh

    n = len(population.species)
    if n > population.target_species_count:
        population.compatibility_threshold *= 1.1
    elif n < population.target_species_count:
        population.compatibility_threshold *= 0.9
    population.compatibility_threshold = max(population.compatibility_threshold, MIN_THRESHOLD)
    return population


def allocate_offspring(
    population: Population,
    total_size: int,
    *,
    staleness_limit: int = 15,
    best_member_id: int | None = None,
) -> dict[int, int]:
    """Split the next generation's slots across species by mean fitness.

    Shares are proportional to each species' mean fitness after shifting by
    the population minimum so negative scores cannot invert proportions.
    Stale species are excluded unless they contain the population's best
    individual. Counts come from largest-remainder rounding and every
    surviving species keeps at least one slot; the returned counts always
    sum to ``total_size`` exactly.
    """
    if total_size < 1:
        raise ValueError("total_size must be >= 1")
    live = [sp for sp in population.species if sp.members]
    for sp in live:
        if sp.mean_fitness is None:
            raise ValueError(f"species {sp.id} has no mean fitness yet")

    def is_protected(sp: Species) -> bool:
        return best_member_id is not None and any(m.id == best_member_id for m in sp.members)

    eligible = [sp for sp in live if sp.staleness <= staleness_limit or is_protected(sp)]
    if not eligible:
        eligible = live
    if total_size < len(eligible):
        raise ValueError(f"{len(eligible)} species cannot share {total_size} slots")

    # Baseline is the worst individual in the population, so species means
    # stay positive weights instead of the weakest species collapsing to zero.
    member_fitness = [m.fitness for sp in live for m in sp.members if m.fitness is not None]
    floor_fitness = min(member_fitness) if member_fitness else 0.0
    floor_fitness = min(floor_fitness, *(sp.mean_fitness for sp in eligible))
    weights = {sp.id: max(sp.mean_fitness - floor_fitness, 1e-9) for sp in eligible}
    total_weight = sum(weights.values())

    quotas = {sp.id: total_size * weights[sp.id] / total_weight for sp in eligible}
    counts = {sp.id: math.floor(quotas[sp.id]) for sp in eligible}
    leftover = total_size - sum(counts.values())
    by_remainder = sorted(eligible, key=lambda sp: (-(quotas[sp.id] - counts[sp.id]), sp.id))
    for sp in by_remainder[:leftover]:
        counts[sp.id] += 1

    # Guarantee survival: species rounded to zero take a slot from the largest.
    for sp in eligible:
        if counts[sp.id] == 0:
            donor = max(eligible, key=lambda s: (counts[s.id], -s.id))
            if counts[donor.id] <= 1:
                raise ValueError("not enough slots to keep every species alive")
            counts[donor.id] -= 1
            counts[sp.id] = 1

    for sp in population.species:
        counts.setdefault(sp.id, 0)
    return counts


def _tournament(
    ranked: list[ChromosomeGraph], rng: random.Random, size: int = 2
) -> ChromosomeGraph:
    """Sample ``size`` members and keep the best-ranked one."""
    if len(ranked) == 1:
        return ranked[0]
    k = min(size, len(ranked))
    picks = rng.sample(range(len(ranked)), k)
    return ranked[min(picks)]


def reproduce_species(
    species: Species,
    offspring_count: int,
    *,
    truncation_fraction: float,
    crossover_prob: float,
    space: SearchSpace,
    policy: MutationPolicy,
    registry: InnovationRegistry,
    rng: random.Random,
    module_species_ids: tuple[int, ...] = (),
    tournament_size: int = 2,
) -> list[ChromosomeGraph]:
    """Produce the species' next members from its ranked current ones.

    The bottom fraction is removed first. The top member survives unchanged
    (elitism, id preserved); every further slot is filled by tournament
    selection plus crossover and mutation. Members must already be ordered
    best first.
    """
    if offspring_count <= 0:
        return []
    parents = truncate_ranked(species.members, truncation_fraction)
    out: list[ChromosomeGraph] = [parents[0].copy()]
    while len(out) < offspring_count:
        pa = _tournament(parents, rng, tournament_size)
        cross_allowed = (
            len(parents) > 1
            and crossover_prob > 0
            and not (policy.hyperparameters_only and species.members[0].kind == MODULE)
        )
        if cross_allowed and rng.random() < crossover_prob:
            pb = _tournament(parents, rng, tournament_size)
            child = crossover(pa, pb, registry, rng, globals_only=policy.hyperparameters_only)
        else:
            child = pa.copy(new_id=registry.new_chromosome_id())
        child = mutate_chromosome(child, space, policy, registry, rng, module_species_ids)
        out.append(child)
    return out


def species_to_dict(sp: Species) -> dict:
    return {
        "id": sp.id,
        "staleness": sp.staleness,
        "best_fitness": sp.best_fitness,
        "mean_fitness": sp.mean_fitness,
        "representative": chromosome_to_dict(sp.representative),
        "members": [chromosome_to_dict(m) for m in sp.members],
    }


def species_from_dict(data: dict) -> Species:
    return Species(
        id=data["id"],
        representative=chromosome_from_dict(data["representative"]),
        members=[chromosome_from_dict(m) for m in data["members"]],
        staleness=data["staleness"],
        best_fitness=data["best_fitness"],
        mean_fitness=data["mean_fitness"],
    )


def population_to_dict(pop: Population) -> dict:
    return {
        "kind": pop.kind,
        "target_species_count": pop.target_species_count,
        "compatibility_threshold": pop.compatibility_threshold,
        "next_species_id": pop.next_species_id,
        "species": [species_to_dict(sp) for sp in pop.species],
    }


def population_from_dict(data: dict) -> Population:
    return Population(
        kind=data["kind"],
        species=[species_from_dict(sp) for sp in data["species"]],
        target_species_count=data["target_species_count"],
        compatibility_threshold=data["compatibility_threshold"],
        next_species_id=data["next_species_id"],
    )
