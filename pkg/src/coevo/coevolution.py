"""The coevolution engine: blueprint and module populations, network
assembly, fitness attribution, and the generation loop.

Blueprint nodes point at module species. Assembly replaces each node with
a concrete module sampled from the pointed-at species, with every node that
shares a pointer receiving the same module, so a network exercises one
consistent choice per species. Network scores then flow back as the mean
over all networks a chromosome appeared in.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .evaluation import EvaluationResult, EvaluationTask
from .genome import (
    BLUEPRINT,
    MODULE,
    ChromosomeGraph,
    CompatibilityCoefficients,
    InnovationRegistry,
    MutationPolicy,
    new_minimal_chromosome,
    topological_order,
)
from .multiobjective import ObjectiveVector, peel_fronts, rank_by_fronts
from .network_ir import (
    OP_CONCAT,
    OP_DENSE,
    OP_DROPOUT,
    OP_FLATTEN,
    OP_INPUT,
    OP_MAX_POOL,
    OP_OUTPUT,
    PARAMETERIZED_KINDS,
    LayerSpec,
    NetworkGraph,
    analyze_network,
    serialize_network,
)
from .search_space import SearchSpace
from .speciation import (
    Population,
    allocate_offspring,
    population_from_dict,
    population_to_dict,
    reproduce_species,
    speciate,
)

CHECKPOINT_VERSION = "1"

INPUT_LAYER = "in"
OUTPUT_LAYER = "out"


def _layer_from_table(table: dict) -> tuple[str, dict]:
    """Translate one module node's hyperparameter table into a layer."""
    kind = table["layer_type"]
    if kind in ("conv1d", "conv2d"):
        return kind, {
            "filters": table["width"],
            "kernel_size": table["kernel_size"],
            "activation": table["activation"],
            "initializer": table["initializer"],
        }
    if kind in ("lstm", "gru", "dense"):
        return kind, {
            "units": table["width"],
            "activation": table["activation"],
            "initializer": table["initializer"],
        }
    if kind == "dropout":
        return kind, {"rate": table["dropout_rate"]}
    raise ValueError(f"unknown layer_type {kind!r}")


@dataclass
class AssembledNetwork:
    """One blueprint instantiated with concrete modules."""

    network_id: str
    network: NetworkGraph
    blueprint_id: int
    module_choices: dict[int, int]
    node_modules: dict[int, int]
    status: str = "pending"
    failure: str = ""
    param_count: int | None = None
    objectives: ObjectiveVector | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _expand_module(
    module: ChromosomeGraph,
    prefix: str,
    upstream: list[str],
    layers: list[LayerSpec],
    provenance: dict[str, int],
    bp_node: int,
    shared: bool,
) -> list[str]:
    """Append one module's layers, feeding its sources from ``upstream``.

    Returns the layer ids of the module's sinks. Single-input ops that would
    receive several tensors get a concat inserted in front of them.
    """
    enabled = module.enabled_edges()
    preds: dict[int, list[int]] = {}
    for e in sorted(enabled, key=lambda e: e.innovation):
        preds.setdefault(e.dst, []).append(e.src)
    order = topological_order(module, enabled_only=True)
    lid = {mn: f"{prefix}n{mn}" for mn in order}
    nodes = module.node_map()

    for mn in order:
        node = nodes[mn]
        op, attrs = _layer_from_table(node.params)
        if shared and op in PARAMETERIZED_KINDS:
            attrs["shared_key"] = f"m{module.id}n{mn}"
        inbound = [lid[p] for p in preds.get(mn, [])] or list(upstream)
        if len(inbound) > 1:
            merge_id = f"{lid[mn]}_merge"
            layers.append(LayerSpec(merge_id, OP_CONCAT, {}, inbound))
            provenance[merge_id] = bp_node
            inbound = [merge_id]
        layers.append(LayerSpec(lid[mn], op, attrs, inbound))
        provenance[lid[mn]] = bp_node

    has_out = {e.src for e in enabled}
    return [lid[mn] for mn in order if mn not in has_out]


def _longest_path(layers: list[LayerSpec], terminals: list[str]) -> list[str]:
    """Layer ids along a maximal-length input-to-terminal chain."""
    by_id = {l.id: l for l in layers}
    length: dict[str, int] = {}
    parent: dict[str, str | None] = {}
    for l in layers:
        best_len, best_par = 0, None
        for src in sorted(l.inbound):
            if length.get(src, 0) > best_len:
                best_len, best_par = length[src], src
        length[l.id] = best_len + 1
        parent[l.id] = best_par
    end = max(terminals, key=lambda t: (length[t], t))
    path: list[str] = []
    cur: str | None = end
    while cur is not None:
        path.append(cur)
        cur = parent[cur]
    path.reverse()
    return path


def _is_cut(layers: list[LayerSpec], blocked: str, terminals: list[str]) -> bool:
    """True when every input-to-terminal path passes through ``blocked``."""
    reached = {l.id for l in layers if l.op_kind == OP_INPUT and l.id != blocked}
    for l in layers:
        if l.id == blocked or l.id in reached:
            continue
        if l.inbound and any(src in reached for src in l.inbound):
            reached.add(l.id)
    return not any(t in reached for t in terminals)


def _insert_pool_chain(layers: list[LayerSpec], after: str, count: int, tag: str) -> str:
    """Chain ``count`` pooling layers behind ``after``, rewiring its consumers."""
    consumers = [l for l in layers if after in l.inbound]
    prev = after
    for j in range(count):
        pid = f"pool_{tag}_{j}"
        layers.append(LayerSpec(pid, OP_MAX_POOL, {"pool_size": 2}, [prev]))
        prev = pid
    for l in consumers:
        l.inbound = [prev if src == after else src for src in l.inbound]
    return prev


def build_network(
    blueprint: ChromosomeGraph,
    module_for_node: dict[int, ChromosomeGraph],
    space: SearchSpace,
) -> tuple[NetworkGraph, dict[int, int]]:
    """Expand a blueprint into a full layer graph.

    Blueprint wiring becomes dense connections between the sink layers of an
    upstream module expansion and the source layers of the downstream one.
    The classifier head (flatten into a linear projection) is appended after
    all module output branches merge, and any required pooling layers are
    spread across module boundaries along the longest path, restricted to
    cut points so that parallel branches always stay shape-consistent.
    """
    layers: list[LayerSpec] = [
        LayerSpec(INPUT_LAYER, OP_INPUT, {"shape": list(space.input_shape)}, [])
    ]
    provenance: dict[str, int] = {}
    bp_order = topological_order(blueprint, enabled_only=True)
    enabled = blueprint.enabled_edges()
    bp_preds: dict[int, list[int]] = {}
    for e in sorted(enabled, key=lambda e: e.innovation):
        bp_preds.setdefault(e.dst, []).append(e.src)
    sinks_of: dict[int, list[str]] = {}
    node_modules: dict[int, int] = {}

    for bn in bp_order:
        module = module_for_node[bn]
        node_modules[bn] = module.id
        upstream: list[str] = []
        for p in bp_preds.get(bn, []):
            upstream.extend(sinks_of[p])
        if not upstream:
            upstream = [INPUT_LAYER]
        prefix = f"b{bn}m{module.id}"
        sinks_of[bn] = _expand_module(
            module, prefix, upstream, layers, provenance, bn, space.weight_sharing
        )

    has_out = {e.src for e in enabled}
    terminals: list[str] = []
    for bn in bp_order:
        if bn not in has_out:
            terminals.extend(sinks_of[bn])

    if space.min_pooling_layers > 0:
        path = _longest_path(layers, terminals)
        segment_ends = [
            lid
            for i, lid in enumerate(path)
            if provenance.get(lid) is not None
            and (i + 1 == len(path) or provenance.get(path[i + 1]) != provenance[lid])
        ]
        internal = [
            lid for lid in segment_ends[:-1] if _is_cut(layers, lid, terminals)
        ]
        slots = len(internal) + 1
        base, extra = divmod(space.min_pooling_layers, slots)
        counts = [base + (1 if i < extra else 0) for i in range(slots)]
        for i, lid in enumerate(internal):
            if counts[i]:
                replacement = _insert_pool_chain(layers, lid, counts[i], f"s{i}")
                terminals = [replacement if t == lid else t for t in terminals]
        head_pools = counts[-1]
    else:
        head_pools = 0

    tail = terminals[0]
    if len(terminals) > 1:
        layers.append(LayerSpec("merge_out", OP_CONCAT, {}, list(terminals)))
        tail = "merge_out"
    if head_pools:
        prev = tail
        for j in range(head_pools):
            pid = f"pool_head_{j}"
            layers.append(LayerSpec(pid, OP_MAX_POOL, {"pool_size": 2}, [prev]))
            prev = pid
        tail = prev
    layers.append(LayerSpec("flatten", OP_FLATTEN, {}, [tail]))
    layers.append(
        LayerSpec(
            "head",
            OP_DENSE,
            {"units": space.output_units, "activation": "linear", "initializer": "glorot"},
            ["flatten"],
        )
    )
    layers.append(LayerSpec(OUTPUT_LAYER, OP_OUTPUT, {}, ["head"]))
    net = NetworkGraph(
        layers,
        inputs=[INPUT_LAYER],
        outputs=[OUTPUT_LAYER],
        globals_table=dict(blueprint.globals_table or {}),
    )
    return net, node_modules


def assemble_networks(
    blueprint_pop: Population,
    module_pop: Population,
    count: int,
    space: SearchSpace,
    rng: random.Random,
    id_prefix: str = "n",
) -> list[AssembledNetwork]:
    """Create ``count`` networks by cycling through blueprints.

    Every node pointing at the same module species receives the same sampled
    module. Pointers to species that no longer exist are redirected to a
    surviving species, chosen once per dead pointer per network.
    """
    live = sorted(module_pop.species_ids())
    if not live:
        raise ValueError("module population has no species")
    blueprints = sorted(blueprint_pop.all_members(), key=lambda b: b.id)
    if not blueprints:
        raise ValueError("blueprint population is empty")

    out: list[AssembledNetwork] = []
    for idx in range(count):
        bp = blueprints[idx % len(blueprints)]
        pointers = sorted({n.species_pointer for n in bp.nodes})
        remap: dict[int, int] = {}
        for p in pointers:
            remap[p] = p if p in live else rng.choice(live)
        choice: dict[int, ChromosomeGraph] = {}
        for sid in sorted(set(remap.values())):
            sp = module_pop.find_species(sid)
            choice[sid] = rng.choice(sp.members)
        module_for_node = {
            n.innovation: choice[remap[n.species_pointer]] for n in bp.nodes
        }
        network_id = f"{id_prefix}{idx:03d}"
        net, node_modules = build_network(bp, module_for_node, space)
        analysis = analyze_network(net, space.input_shape)
        assembled = AssembledNetwork(
            network_id=network_id,
            network=net,
            blueprint_id=bp.id,
            module_choices={sid: chrom.id for sid, chrom in choice.items()},
            node_modules=node_modules,
            param_count=analysis.param_count,
        )
        if analysis.ok:
            assembled.status = "assembled"
        else:
            assembled.status = "failed"
            assembled.failure = "; ".join(analysis.violations)
        out.append(assembled)
    return out


def attribute_fitness(
    networks: list[AssembledNetwork],
    module_pop: Population,
    blueprint_pop: Population,
) -> set[int]:
    """Write mean network objectives back onto every contributing chromosome.

    A chromosome absent from all networks keeps whatever fitness it already
    had; the ranking step later fills genuinely unknown values. Returns the
    ids that received fresh values.
    """
    acc: dict[int, list] = {}
    for net in networks:
        if net.objectives is None:
            continue
        contributors = [net.blueprint_id] + sorted(set(net.module_choices.values()))
        for cid in contributors:
            cell = acc.setdefault(cid, [0.0, 0.0, 0])
            cell[0] += net.objectives.primary
            cell[1] += net.objectives.secondary
            cell[2] += 1
    for chrom in module_pop.all_members() + blueprint_pop.all_members():
        cell = acc.get(chrom.id)
        if cell is not None:
            chrom.fitness = cell[0] / cell[2]
            chrom.secondary = cell[1] / cell[2]
    return set(acc)


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def rank_and_update(population: Population, mode: str, failure_floor: float = 0.0) -> int:
    """Fill unknown fitness with the species mean, order members best first,
    and refresh species statistics. Returns how many members were filled."""
    filled = 0
    for sp in sorted(population.species, key=lambda s: s.id):
        known = [m.fitness for m in sp.members if m.fitness is not None]
        fill = _mean(known) if known else failure_floor
        known_sec = [m.secondary for m in sp.members if m.secondary is not None]
        fill_sec = _mean(known_sec) if known_sec else 0.0
        for m in sp.members:
            if m.fitness is None:
                m.fitness = fill
                filled += 1
            if m.secondary is None:
                m.secondary = fill_sec
        if mode == "multi":
            entries = [
                (m, ObjectiveVector(m.fitness, m.secondary, -m.secondary)) for m in sp.members
            ]
            ranked, _ = rank_by_fronts(entries)
            sp.members = ranked
        else:
            sp.members.sort(key=lambda m: (-m.fitness, m.id))
        sp.mean_fitness = _mean([m.fitness for m in sp.members])
        top = max(m.fitness for m in sp.members)
        if sp.best_fitness is None or top > sp.best_fitness:
            sp.best_fitness = top
            sp.staleness = 0
        else:
            sp.staleness += 1
    return filled


@dataclass
class BestRecord:
    """Hall of fame entry: the strongest network seen so far, kept honest by
    re-evaluating it alongside every generation's fresh networks."""

    network_json: bytes
    primary: float
    raw_secondary: float
    network_id: str
    blueprint_id: int
    generation: int

    def to_dict(self) -> dict:
        return {
            "network_json": self.network_json.decode("utf-8"),
            "primary": self.primary,
            "raw_secondary": self.raw_secondary,
            "network_id": self.network_id,
            "blueprint_id": self.blueprint_id,
            "generation": self.generation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BestRecord":
        return cls(
            network_json=data["network_json"].encode("utf-8"),
            primary=data["primary"],
            raw_secondary=data["raw_secondary"],
            network_id=data["network_id"],
            blueprint_id=data["blueprint_id"],
            generation=data["generation"],
        )


@dataclass
class EvolutionSettings:
    """Engine knobs, decoupled from file-level configuration."""

    module_population_size: int = 56
    blueprint_population_size: int = 22
    assembled_count: int = 100
    module_species_target: int = 4
    blueprint_species_target: int = 1
    add_node_prob: float = 0.05
    add_connection_prob: float = 0.05
    param_mutation_prob: float = 0.1
    crossover_prob: float = 0.3
    truncation_fraction: float = 0.5
    staleness_limit: int = 15
    tournament_size: int = 2
    compatibility_threshold: float = 1.0
    compat_structural: float = 1.0
    compat_parametric: float = 1.0
    hyperparameters_only: bool = False
    objective_mode: str = "single"
    secondary_sort: bool = False
    # Ablation baseline: keep every operator but erase the selection signal,
    # so runs consume the same evaluation budget with no fitness pressure.
    random_search: bool = False
    seed: int | str = 0
    train_config: dict = field(default_factory=dict)

    def coefficients(self) -> CompatibilityCoefficients:
        return CompatibilityCoefficients(self.compat_structural, self.compat_parametric)

    def policy(self) -> MutationPolicy:
        return MutationPolicy(
            add_node_prob=self.add_node_prob,
            add_connection_prob=self.add_connection_prob,
            param_mutation_prob=self.param_mutation_prob,
            hyperparameters_only=self.hyperparameters_only,
        )


@dataclass
class EvolutionState:
    space: SearchSpace
    settings: EvolutionSettings
    rng: random.Random
    registry: InnovationRegistry
    module_pop: Population
    blueprint_pop: Population
    generation: int = 0
    eval_count: int = 0
    best: BestRecord | None = None


def initial_state(space: SearchSpace, settings: EvolutionSettings) -> EvolutionState:
    """Seeded populations of minimal chromosomes, already speciated."""
    rng = random.Random(settings.seed)
    registry = InnovationRegistry()
    coeff = settings.coefficients()

    module_pop = Population(
        kind=MODULE,
        target_species_count=settings.module_species_target,
        compatibility_threshold=settings.compatibility_threshold,
    )
    modules = [
        new_minimal_chromosome(MODULE, space, registry, rng)
        for _ in range(settings.module_population_size)
    ]
    speciate(module_pop, modules, coeff, space)

    blueprint_pop = Population(
        kind=BLUEPRINT,
        target_species_count=settings.blueprint_species_target,
        compatibility_threshold=settings.compatibility_threshold,
    )
    species_ids = module_pop.species_ids()
    blueprints = [
        new_minimal_chromosome(BLUEPRINT, space, registry, rng, species_ids=species_ids)
        for _ in range(settings.blueprint_population_size)
    ]
    speciate(blueprint_pop, blueprints, coeff, space)

    return EvolutionState(
        space=space,
        settings=settings,
        rng=rng,
        registry=registry,
        module_pop=module_pop,
        blueprint_pop=blueprint_pop,
    )


@dataclass
class GenerationArtifacts:
    report: dict
    eval_rows: list[dict]
    pareto_rows: list[dict]
    attributed: dict[int, tuple[float, float]]
    networks: list[AssembledNetwork]


ELITE_SUFFIX = "elite"


def evolve_generation(state: EvolutionState, backend) -> GenerationArtifacts:
    """Run one full generation: assemble, evaluate, attribute, rank, reproduce."""
    s = state.settings
    gen = state.generation + 1
    rng_snapshot = state.rng.getstate()
    state.registry.begin_generation()

    networks = assemble_networks(
        state.blueprint_pop,
        state.module_pop,
        s.assembled_count,
        state.space,
        state.rng,
        id_prefix=f"g{gen:04d}_n",
    )

    tasks = [
        EvaluationTask(
            net.network_id, serialize_network(net.network), dict(s.train_config)
        )
        for net in networks
        if net.status == "assembled"
    ]
    probe_id = None
    if state.best is not None:
        probe_id = f"g{gen:04d}_{ELITE_SUFFIX}"
        tasks.append(EvaluationTask(probe_id, state.best.network_json, dict(s.train_config)))

    try:
        results = {r.task_id: r for r in backend.evaluate(tasks)}
    except Exception:
        # An aborted sweep must not leave half a generation behind: rewinding
        # the assembly draws keeps any checkpoint taken now replayable.
        state.rng.setstate(rng_snapshot)
        raise
    state.eval_count += len(tasks)

    failures = 0
    for net in networks:
        if net.status == "failed":
            net.objectives = ObjectiveVector(0.0, 0.0, 0.0)
            failures += 1
            continue
        r = results[net.network_id]
        if r.ok:
            net.status = "ok"
            net.objectives = ObjectiveVector.of(r.primary, r.raw_secondary)
        else:
            net.status = "failed"
            net.failure = r.reason
            net.objectives = ObjectiveVector(0.0, 0.0, 0.0)
            failures += 1

    if probe_id is not None:
        probe = results[probe_id]
        if probe.ok:
            state.best.primary = probe.primary
            state.best.raw_secondary = probe.raw_secondary

    eval_rows = [
        {
            "generation": gen,
            "network_id": net.network_id,
            "blueprint_id": net.blueprint_id,
            "module_ids": sorted(set(net.module_choices.values())),
            "status": net.status,
            "primary": net.objectives.primary,
            "raw_secondary": net.objectives.raw_secondary,
            "reason": net.failure,
        }
        for net in networks
    ]

    attribute_fitness(networks, state.module_pop, state.blueprint_pop)
    attributed: dict[int, tuple[float, float]] = {}
    for chrom in state.module_pop.all_members() + state.blueprint_pop.all_members():
        if chrom.fitness is not None:
            attributed[chrom.id] = (chrom.fitness, chrom.secondary)

    ok_nets = [net for net in networks if net.ok]
    pareto_rows: list[dict] = []
    if ok_nets:
        entries = [(net, net.objectives) for net in ok_nets]
        fronts = peel_fronts(entries)
        for depth, front in enumerate(fronts, start=1):
            members = list(front)
            if s.secondary_sort:
                members.sort(key=lambda e: -e[1].secondary)
            for net, vec in members:
                pareto_rows.append(
                    {
                        "generation": gen,
                        "network_id": net.network_id,
                        "primary": vec.primary,
                        "raw_secondary": vec.raw_secondary,
                        "front_index": depth,
                    }
                )

    # Hall of fame update; strictly-better replacement keeps it stable under
    # re-evaluation noise.
    if ok_nets:
        top = min(ok_nets, key=lambda n: (-n.objectives.primary, -n.objectives.secondary, n.network_id))
        current = state.best.primary if state.best is not None else None
        if current is None or top.objectives.primary > current:
            state.best = BestRecord(
                network_json=serialize_network(top.network),
                primary=top.objectives.primary,
                raw_secondary=top.objectives.raw_secondary,
                network_id=top.network_id,
                blueprint_id=top.blueprint_id,
                generation=gen,
            )

    if s.random_search:
        for chrom in state.module_pop.all_members() + state.blueprint_pop.all_members():
            chrom.fitness = 0.0
            chrom.secondary = 0.0
    filled = rank_and_update(state.module_pop, s.objective_mode)
    filled += rank_and_update(state.blueprint_pop, s.objective_mode)

    report = {
        "generation": gen,
        "networks": len(networks),
        "failures": failures,
        "filled_from_species_mean": filled,
        "best_primary": state.best.primary if state.best else None,
        "best_raw_secondary": state.best.raw_secondary if state.best else None,
        "best_network_id": state.best.network_id if state.best else None,
        "mean_primary": _mean([n.objectives.primary for n in ok_nets]) if ok_nets else 0.0,
        "module_species": [
            {"id": sp.id, "size": len(sp.members)} for sp in sorted(state.module_pop.species, key=lambda x: x.id)
        ],
        "blueprint_species": [
            {"id": sp.id, "size": len(sp.members)} for sp in sorted(state.blueprint_pop.species, key=lambda x: x.id)
        ],
        "evaluations_total": state.eval_count,
    }

    _reproduce_population(state, state.module_pop, s.module_population_size)
    module_species_ids = state.module_pop.species_ids()
    _reproduce_population(
        state, state.blueprint_pop, s.blueprint_population_size, module_species_ids
    )

    state.generation = gen
    return GenerationArtifacts(report, eval_rows, pareto_rows, attributed, networks)


def _reproduce_population(
    state: EvolutionState,
    population: Population,
    total_size: int,
    module_species_ids: tuple[int, ...] = (),
) -> None:
    s = state.settings
    best = population.best_member()
    counts = allocate_offspring(
        population,
        total_size,
        staleness_limit=s.staleness_limit,
        best_member_id=best.id if best is not None else None,
    )
    offspring: list[ChromosomeGraph] = []
    for sp in sorted(population.species, key=lambda x: x.id):
        offspring.extend(
            reproduce_species(
                sp,
                counts.get(sp.id, 0),
                truncation_fraction=s.truncation_fraction,
                crossover_prob=s.crossover_prob,
                space=state.space,
                policy=s.policy(),
                registry=state.registry,
                rng=state.rng,
                module_species_ids=module_species_ids,
                tournament_size=s.tournament_size,
            )
        )
    speciate(population, offspring, s.coefficients(), state.space)


def _rng_state_to_json(rng: random.Random) -> list:
    version, internal, gauss = rng.getstate()
    return [version, list(internal), gauss]


def _rng_state_from_json(data: list) -> tuple:
    return (data[0], tuple(data[1]), data[2])


def state_to_checkpoint(state: EvolutionState, effective_config: dict) -> dict:
    return {
        "checkpoint_version": CHECKPOINT_VERSION,
        "generation": state.generation,
        "eval_count": state.eval_count,
        "config": effective_config,
        "rng_state": _rng_state_to_json(state.rng),
        "registry": state.registry.state_dict(),
        "module_population": population_to_dict(state.module_pop),
        "blueprint_population": population_to_dict(state.blueprint_pop),
        "best": state.best.to_dict() if state.best else None,
    }


class CheckpointError(ValueError):
    """Checkpoint missing, malformed, or inconsistent with its config."""


def state_from_checkpoint(
    data: dict, space: SearchSpace, settings: EvolutionSettings
) -> EvolutionState:
    if not isinstance(data, dict) or data.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {data.get('checkpoint_version')!r}"
        )
    try:
        module_pop = population_from_dict(data["module_population"])
        blueprint_pop = population_from_dict(data["blueprint_population"])
        rng = random.Random()
        rng.setstate(_rng_state_from_json(data["rng_state"]))
        registry = InnovationRegistry.from_state(data["registry"])
        best = BestRecord.from_dict(data["best"]) if data.get("best") else None
        generation = int(data["generation"])
        eval_count = int(data["eval_count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc

    problems = []
    if len(module_pop.all_members()) != settings.module_population_size:
        problems.append(
            f"module population holds {len(module_pop.all_members())} members "
            f"but the configuration says {settings.module_population_size}"
        )
    if len(blueprint_pop.all_members()) != settings.blueprint_population_size:
        problems.append(
            f"blueprint population holds {len(blueprint_pop.all_members())} members "
            f"but the configuration says {settings.blueprint_population_size}"
        )
    if problems:
        raise CheckpointError("; ".join(problems))

    return EvolutionState(
        space=space,
        settings=settings,
        rng=rng,
        registry=registry,
        module_pop=module_pop,
        blueprint_pop=blueprint_pop,
        generation=generation,
        eval_count=eval_count,
        best=best,
    )
