"""Graph chromosomes and their variation operators.

Two chromosome kinds share one representation: module chromosomes whose
nodes carry layer hyperparameter tables, and blueprint chromosomes whose
nodes point at module species and which additionally carry a table of
network-global hyperparameters. Structural genes (nodes and edges) are
tagged with innovation numbers so that the same structural event gets the
same number everywhere, which is what makes crossover and compatibility
distance line up genes across individuals.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .search_space import ConfigurationError, SearchSpace

MODULE = "module"
BLUEPRINT = "blueprint"

# Probability that a gene disabled in either parent stays disabled in the child.
DISABLE_INHERIT_PROB = 0.75


@dataclass
class NodeGene:
    innovation: int
    params: dict | None = None
    species_pointer: int | None = None

    def copy(self) -> "NodeGene":
        return NodeGene(
            self.innovation,
            dict(self.params) if self.params is not None else None,
            self.species_pointer,
        )


@dataclass
class EdgeGene:
    innovation: int
    src: int
    dst: int
    enabled: bool = True

    def copy(self) -> "EdgeGene":
        return EdgeGene(self.innovation, self.src, self.dst, self.enabled)


@dataclass
class ChromosomeGraph:
    """A small directed acyclic graph of genes plus bookkeeping fields.

    ``fitness`` and ``secondary`` are None until attribution assigns them.
    """

    kind: str
    nodes: list[NodeGene]
    edges: list[EdgeGene]
    globals_table: dict | None = None
    id: int = -1
    fitness: float | None = None
    secondary: float | None = None

    def copy(self, *, new_id: int | None = None) -> "ChromosomeGraph":
        c = ChromosomeGraph(
            kind=self.kind,
            nodes=[n.copy() for n in self.nodes],
            edges=[e.copy() for e in self.edges],
            globals_table=dict(self.globals_table) if self.globals_table is not None else None,
            id=self.id if new_id is None else new_id,
            fitness=self.fitness,
            secondary=self.secondary,
        )
        if new_id is not None:
            c.fitness = None
            c.secondary = None
        return c

    def node_map(self) -> dict[int, NodeGene]:
        return {n.innovation: n for n in self.nodes}

    def enabled_edges(self) -> list[EdgeGene]:
        return [e for e in self.edges if e.enabled]

    def sources(self, *, enabled_only: bool = False) -> list[int]:
        """Node innovations with no incoming edges. Isolated nodes count."""
        edges = self.enabled_edges() if enabled_only else self.edges
        has_in = {e.dst for e in edges}
        return [n.innovation for n in self.nodes if n.innovation not in has_in]

    def sinks(self, *, enabled_only: bool = False) -> list[int]:
        edges = self.enabled_edges() if enabled_only else self.edges
        has_out = {e.src for e in edges}
        return [n.innovation for n in self.nodes if n.innovation not in has_out]

    def structural_signature(self) -> tuple:
        """Topology identity: innovations and wiring, ignoring payload tables."""
        return (
            tuple(sorted(n.innovation for n in self.nodes)),
            tuple(sorted((e.innovation, e.src, e.dst, e.enabled) for e in self.edges)),
        )


class InnovationRegistry:
    """Issues innovation numbers and chromosome ids.

    Structural events that happen independently within one generation are
    deduplicated through a signature cache: splitting the same edge, or
    adding the same (src, dst) connection, yields the same numbers in every
    chromosome until ``begin_generation`` clears the cache.
    """

    def __init__(self, next_innovation: int = 0, next_chromosome_id: int = 0):
        self.next_innovation = next_innovation
        self.next_chromosome_id = next_chromosome_id
        self._cache: dict[tuple, tuple[int, ...]] = {}

    def issue_block(self, signature: tuple | None, count: int) -> tuple[int, ...]:
        if signature is not None and signature in self._cache:
            return self._cache[signature]
        block = tuple(range(self.next_innovation, self.next_innovation + count))
        self.next_innovation += count
        if signature is not None:
            self._cache[signature] = block
        return block

    def new_chromosome_id(self) -> int:
        cid = self.next_chromosome_id
        self.next_chromosome_id += 1
        return cid

    def begin_generation(self) -> None:
        self._cache.clear()

    def state_dict(self) -> dict:
        return {
            "next_innovation": self.next_innovation,
            "next_chromosome_id": self.next_chromosome_id,
        }

    @classmethod
    def from_state(cls, state: dict) -> "InnovationRegistry":
        return cls(state["next_innovation"], state["next_chromosome_id"])


def _toposort(node_ids: list[int], edges: list[tuple[int, int]]) -> list[int] | None:
    """Kahn's algorithm; returns None when the edge set contains a cycle."""
    indeg = {n: 0 for n in node_ids}
    adj: dict[int, list[int]] = {n: [] for n in node_ids}
    for src, dst in edges:
        indeg[dst] += 1
        adj[src].append(dst)
    ready = sorted(n for n, d in indeg.items() if d == 0)
    order: list[int] = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        for m in adj[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
        ready.sort()
    return order if len(order) == len(node_ids) else None


def topological_order(chrom: ChromosomeGraph, *, enabled_only: bool = False) -> list[int]:
    edges = chrom.enabled_edges() if enabled_only else chrom.edges
    order = _toposort([n.innovation for n in chrom.nodes], [(e.src, e.dst) for e in edges])
    if order is None:
        raise ValueError(f"chromosome {chrom.id} contains a cycle")
    return order


def validate_chromosome(chrom: ChromosomeGraph, space: SearchSpace | None = None) -> list[str]:
    """Structural and payload checks; returns human-readable violations."""
    problems: list[str] = []
    if chrom.kind not in (MODULE, BLUEPRINT):
        problems.append(f"unknown chromosome kind {chrom.kind!r}")
        return problems

    node_ids = [n.innovation for n in chrom.nodes]
    edge_ids = [e.innovation for e in chrom.edges]
    all_ids = node_ids + edge_ids
    if len(all_ids) != len(set(all_ids)):
        problems.append("duplicate innovation numbers")
    if not chrom.nodes:
        problems.append("chromosome has no nodes")
        return problems

    known = set(node_ids)
    seen_pairs = set()
    for e in chrom.edges:
        if e.src not in known or e.dst not in known:
            problems.append(f"edge {e.innovation} references missing node")
        if e.src == e.dst:
            problems.append(f"edge {e.innovation} is a self-loop")
        if (e.src, e.dst) in seen_pairs:
            problems.append(f"duplicate edge {e.src}->{e.dst}")
        seen_pairs.add((e.src, e.dst))
    if problems:
        return problems

    # Cycles are checked over all edges, disabled included: re-enabling a
    # gene must never be able to introduce one.
    if _toposort(node_ids, [(e.src, e.dst) for e in chrom.edges]) is None:
        problems.append("cycle detected")
    if not chrom.sources():
        problems.append("no source node")
    if not chrom.sinks():
        problems.append("no sink node")

    for n in chrom.nodes:
        if chrom.kind == MODULE:
            if n.params is None:
                problems.append(f"module node {n.innovation} missing hyperparameter table")
            elif space is not None:
                for p in space.node_params.validate_table(n.params):
                    problems.append(f"node {n.innovation}: {p}")
            if n.species_pointer is not None:
                problems.append(f"module node {n.innovation} carries a species pointer")
        else:
            if n.species_pointer is None:
                problems.append(f"blueprint node {n.innovation} missing species pointer")
            if n.params is not None:
                problems.append(f"blueprint node {n.innovation} carries a layer table")
    if chrom.kind == BLUEPRINT:
        if chrom.globals_table is None:
            problems.append("blueprint missing globals table")
        elif space is not None:
            for p in space.global_params.validate_table(chrom.globals_table):
                problems.append(f"globals: {p}")
    elif chrom.globals_table is not None:
        problems.append("module chromosome carries a globals table")
    return problems


def new_minimal_chromosome(
    kind: str,
    space: SearchSpace,
    registry: InnovationRegistry,
    rng: random.Random,
    species_ids: tuple[int, ...] = (),
) -> ChromosomeGraph:
    """Two nodes joined by a single enabled edge, with sampled payloads."""
    if kind == BLUEPRINT and not species_ids:
        raise ConfigurationError("blueprint chromosome needs module species to point at")
    n0, n1, e0 = registry.issue_block(("minimal", kind), 3)
    if kind == MODULE:
        nodes = [
            NodeGene(n0, params=space.node_params.sample_table(rng)),
            NodeGene(n1, params=space.node_params.sample_table(rng)),
        ]
        globals_table = None
    else:
        ordered = tuple(sorted(species_ids))
        nodes = [
            NodeGene(n0, species_pointer=rng.choice(ordered)),
            NodeGene(n1, species_pointer=rng.choice(ordered)),
        ]
        globals_table = space.global_params.sample_table(rng)
    return ChromosomeGraph(
        kind=kind,
        nodes=nodes,
        edges=[EdgeGene(e0, n0, n1, True)],
        globals_table=globals_table,
        id=registry.new_chromosome_id(),
    )


def _sample_node_payload(
    kind: str, space: SearchSpace, rng: random.Random, species_ids: tuple[int, ...]
) -> NodeGene:
    if kind == MODULE:
        return NodeGene(-1, params=space.node_params.sample_table(rng))
    return NodeGene(-1, species_pointer=rng.choice(tuple(sorted(species_ids))))


def mutate_add_node(
    chrom: ChromosomeGraph,
    space: SearchSpace,
    registry: InnovationRegistry,
    rng: random.Random,
    species_ids: tuple[int, ...] = (),
) -> tuple[ChromosomeGraph, bool]:
    """Split one enabled edge: disable it, insert a fresh node wired in between.

    Returns (chromosome, applied). Skipped when no enabled edge exists.
    """
    out = chrom.copy()
    candidates = sorted(out.enabled_edges(), key=lambda e: e.innovation)
    if not candidates:
        return out, False
    edge = rng.choice(candidates)
    ids = registry.issue_block(("split", edge.innovation), 3)
    existing = {n.innovation for n in out.nodes} | {e.innovation for e in out.edges}
    if any(i in existing for i in ids):
        # The cached split collides with genes this individual already carries
        # (possible after a re-enabled edge meets an inherited split); fall
        # back to fresh numbers so innovations stay unique within the graph.
        ids = registry.issue_block(None, 3)
    node_id, e_in, e_out = ids
    fresh = _sample_node_payload(out.kind, space, rng, species_ids)
    fresh.innovation = node_id
    edge.enabled = False
    out.nodes.append(fresh)
    out.edges.append(EdgeGene(e_in, edge.src, node_id, True))
    out.edges.append(EdgeGene(e_out, node_id, edge.dst, True))
    return out, True


def _reaches(chrom: ChromosomeGraph, start: int, goal: int) -> bool:
    """Path existence over all edges, disabled included."""
    adj: dict[int, list[int]] = {}
    for e in chrom.edges:
        adj.setdefault(e.src, []).append(e.dst)
    stack, seen = [start], set()
    while stack:
        n = stack.pop()
        if n == goal:
            return True
        if n in seen:
            continue
        seen.add(n)
        stack.extend(adj.get(n, ()))
    return False


def mutate_add_connection(
    chrom: ChromosomeGraph, registry: InnovationRegistry, rng: random.Random
) -> tuple[ChromosomeGraph, bool]:
    """Add one new enabled edge between existing nodes, keeping the graph acyclic.

    Candidate pairs exclude self-loops, existing connections in either enabled
    state, and any pair whose reverse path already exists. Skipped when no
    legal pair remains.
    """
    out = chrom.copy()
    present = {(e.src, e.dst) for e in out.edges}
    ids = sorted(n.innovation for n in out.nodes)
    legal = [
        (u, v)
        for u in ids
        for v in ids
        if u != v and (u, v) not in present and not _reaches(out, v, u)
    ]
    if not legal:
        return out, False
    u, v = rng.choice(legal)
    (edge_id,) = registry.issue_block(("edge", u, v), 1)
    out.edges.append(EdgeGene(edge_id, u, v, True))
    return out, True


def mutate_hyperparameters(
    chrom: ChromosomeGraph,
    space: SearchSpace,
    rng: random.Random,
    prob: float,
    species_ids: tuple[int, ...] = (),
    *,
    globals_only: bool = False,
) -> ChromosomeGraph:
    """Per-parameter gated mutation of node tables, pointers, and globals."""
    out = chrom.copy()
    if not globals_only:
        for n in out.nodes:
            if out.kind == MODULE:
                n.params = space.node_params.mutate_table(n.params, rng, prob)
            elif species_ids and rng.random() < prob:
                n.species_pointer = rng.choice(tuple(sorted(species_ids)))
    if out.kind == BLUEPRINT and out.globals_table is not None:
        out.globals_table = space.global_params.mutate_table(out.globals_table, rng, prob)
    return out


@dataclass(frozen=True)
class MutationPolicy:
    """Which structural and parametric mutations apply during reproduction."""

    add_node_prob: float = 0.05
    add_connection_prob: float = 0.05
    param_mutation_prob: float = 0.1
    hyperparameters_only: bool = False


def mutate_chromosome(
    chrom: ChromosomeGraph,
    space: SearchSpace,
    policy: MutationPolicy,
    registry: InnovationRegistry,
    rng: random.Random,
    species_ids: tuple[int, ...] = (),
) -> ChromosomeGraph:
    """The full mutation pipeline applied to one offspring."""
    if policy.hyperparameters_only:
        # Structure and per-node tables are frozen; only blueprint globals move.
        if chrom.kind == BLUEPRINT:
            return mutate_hyperparameters(
                chrom, space, rng, policy.param_mutation_prob, globals_only=True
            )
        return chrom
    out = chrom
    if rng.random() < policy.add_node_prob:
        out, _ = mutate_add_node(out, space, registry, rng, species_ids)
    if rng.random() < policy.add_connection_prob:
        out, _ = mutate_add_connection(out, registry, rng)
    return mutate_hyperparameters(out, space, rng, policy.param_mutation_prob, species_ids)


def crossover(
    a: ChromosomeGraph,
    b: ChromosomeGraph,
    registry: InnovationRegistry,
    rng: random.Random,
    *,
    globals_only: bool = False,
) -> ChromosomeGraph:
    """Recombine two parents of the same kind.

    The child inherits the fitter parent's topology gene for gene, so it is
    acyclic by construction. Genes present in both parents pick their payload
    from either side uniformly; disjoint and excess genes come from the fitter
    parent only. A gene disabled in either parent stays disabled with
    probability 0.75. Ties on fitness resolve toward the first argument.
    With ``globals_only`` the child is a straight copy of the fitter parent
    and only the globals table recombines.
    """
    if a.kind != b.kind:
        raise ValueError("cannot cross chromosomes of different kinds")
    if a.fitness is None or b.fitness is None:
        raise ValueError("crossover requires both parents to have fitness")
    fitter, other = (a, b) if a.fitness >= b.fitness else (b, a)
    other_nodes = other.node_map()
    other_edges = {e.innovation: e for e in other.edges}

    child_nodes: list[NodeGene] = []
    for n in fitter.nodes:
        match = other_nodes.get(n.innovation)
        if match is not None and not globals_only:
            chosen = n if rng.random() < 0.5 else match
            child_nodes.append(chosen.copy())
        else:
            child_nodes.append(n.copy())

    child_edges: list[EdgeGene] = []
    for e in fitter.edges:
        match = other_edges.get(e.innovation)
        if match is not None and not globals_only:
            chosen = (e if rng.random() < 0.5 else match).copy()
        else:
            chosen = e.copy()
        # Wiring always follows the fitter parent; only the flag recombines.
        chosen.src, chosen.dst = e.src, e.dst
        disabled_somewhere = (not e.enabled) or (match is not None and not match.enabled)
        if disabled_somewhere:
            chosen.enabled = not (rng.random() < DISABLE_INHERIT_PROB)
        else:
            chosen.enabled = True
        child_edges.append(chosen)

    globals_table = None
    if fitter.kind == BLUEPRINT:
        globals_table = {}
        for key in fitter.globals_table:
            if key in other.globals_table and rng.random() < 0.5:
                globals_table[key] = other.globals_table[key]
            else:
                globals_table[key] = fitter.globals_table[key]

    return ChromosomeGraph(
        kind=fitter.kind,
        nodes=child_nodes,
        edges=child_edges,
        globals_table=globals_table,
        id=registry.new_chromosome_id(),
    )


@dataclass(frozen=True)
class CompatibilityCoefficients:
    structural: float = 1.0
    parametric: float = 1.0


def compatibility_distance(
    a: ChromosomeGraph,
    b: ChromosomeGraph,
    coeff: CompatibilityCoefficients,
    space: SearchSpace,
) -> float:
    """How alike two same-kind chromosomes are; 0 for identical individuals.

    Combines the fraction of unmatched genes (normalized by the larger gene
    count) with the mean payload distance over matching nodes. Matching node
    payload distance is the normalized table distance for modules and a 0/1
    pointer disagreement for blueprints.
    """
    genes_a = {n.innovation for n in a.nodes} | {e.innovation for e in a.edges}
    genes_b = {n.innovation for n in b.nodes} | {e.innovation for e in b.edges}
    unmatched = len(genes_a ^ genes_b)
    bigger = max(len(genes_a), len(genes_b))
    structural = unmatched / bigger if bigger else 0.0

    nodes_b = b.node_map()
    dists = []
    for n in a.nodes:
        m = nodes_b.get(n.innovation)
        if m is None:
            continue
        if a.kind == MODULE:
            dists.append(space.node_params.table_distance(n.params, m.params))
        else:
            dists.append(0.0 if n.species_pointer == m.species_pointer else 1.0)
    parametric = sum(dists) / len(dists) if dists else 0.0
    return coeff.structural * structural + coeff.parametric * parametric


def chromosome_to_dict(chrom: ChromosomeGraph) -> dict:
    nodes = []
    for n in chrom.nodes:
        entry: dict = {"innovation": n.innovation}
        if chrom.kind == MODULE:
            entry["params"] = dict(n.params)
        else:
            entry["species_pointer"] = n.species_pointer
        nodes.append(entry)
    out = {
        "kind": chrom.kind,
        "id": chrom.id,
        "nodes": nodes,
        "edges": [
            {"innovation": e.innovation, "src": e.src, "dst": e.dst, "enabled": e.enabled}
            for e in chrom.edges
        ],
        "fitness": chrom.fitness,
        "secondary": chrom.secondary,
    }
    if chrom.kind == BLUEPRINT:
        out["globals"] = dict(chrom.globals_table)
    return out


def chromosome_from_dict(data: dict) -> ChromosomeGraph:
    kind = data["kind"]
    nodes = [
        NodeGene(
            n["innovation"],
            params=dict(n["params"]) if kind == MODULE else None,
            species_pointer=n.get("species_pointer") if kind == BLUEPRINT else None,
        )
        for n in data["nodes"]
    ]
    edges = [EdgeGene(e["innovation"], e["src"], e["dst"], e["enabled"]) for e in data["edges"]]
    return ChromosomeGraph(
        kind=kind,
        nodes=nodes,
        edges=edges,
        globals_table=dict(data["globals"]) if kind == BLUEPRINT else None,
        id=data["id"],
        fitness=data.get("fitness"),
        secondary=data.get("secondary"),
    )
