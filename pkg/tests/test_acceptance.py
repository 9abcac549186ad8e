"""The ten primary acceptance checks, one per criterion, each printing a
PASS/FAIL line through the shared reporter.

These favor end-to-end honesty over speed: the effectiveness and front
dominance checks run full paired evolution experiments on the deterministic
surrogate.
"""
import json
import random
import re
import time
from pathlib import Path

import pytest

from conftest import chain_net, report_criterion, run_fault_simulation
from test_network_ir import PARAM_FIXTURES

from coevo.cli import EXIT_ABORTED, EXIT_OK, main
from coevo.coevolution import (
    EvolutionSettings,
    assemble_networks,
    build_network,
    evolve_generation,
    initial_state,
)
from coevo.distrib import CompletionQueue, EvaluatorUnreachable, LocalBackend
from coevo.evaluation import (
    EvaluationResult,
    EvaluationTask,
    NoisyEvaluator,
    SurrogateConfig,
    SurrogateEvaluator,
)
from coevo.genome import BLUEPRINT, MODULE, ChromosomeGraph, NodeGene
from coevo.multiobjective import (
    ObjectiveVector,
    front_covers,
    pareto_front,
    rank_by_fronts,
)
from coevo.network_ir import analyze_network, count_parameters
from coevo.search_space import build_space


def surrogate_backend(config: SurrogateConfig | None = None) -> LocalBackend:
    return LocalBackend(SurrogateEvaluator(config or SurrogateConfig()))


def random_vector(rng: random.Random) -> ObjectiveVector:
    # A coarse grid half the time makes duplicates and axis ties common.
    if rng.random() < 0.5:
        return ObjectiveVector(rng.randrange(6) / 5.0, float(rng.randrange(8)))
    return ObjectiveVector(rng.random(), rng.random() * 10.0)


class TestCriterion1ParetoOracle:
    def test_sweep_front_equals_brute_force(self):
        rng = random.Random(101)
        started = time.monotonic()
        mismatches = 0
        sets = 1000
        for _ in range(sets):
            vecs = [random_vector(rng) for _ in range(rng.randint(1, 64))]
            entries = list(enumerate(vecs))
            front = pareto_front(entries)
            got = sorted((v.primary, v.secondary) for _, v in front)
            points = {(v.primary, v.secondary) for v in vecs}
            expected = sorted(
                p for p in points
                if not any(
                    q[0] >= p[0] and q[1] >= p[1] and q != p for q in points
                )
            )
            if got != expected or len(got) != len(set(got)):
                mismatches += 1
        elapsed = time.monotonic() - started
        ok = mismatches == 0 and elapsed < 5.0
        report_criterion(
            1, "pareto front equals brute-force oracle", ok,
            f"{sets} sets, {mismatches} mismatches, {elapsed:.2f}s",
        )
        assert ok


class TestCriterion2FrontPeeling:
    def test_chains_antichains_and_fuzzed_order(self):
        # A dominance chain peels one point per front, best first.
        chain = [(i, ObjectiveVector(float(i), float(i))) for i in range(10)]
        random.Random(0).shuffle(chain)
        ranked, depths = rank_by_fronts(chain)
        chain_ok = ranked == list(range(9, -1, -1)) and depths == list(range(1, 11))

        # An antichain is a single front ordered by descending primary.
        anti = [(i, ObjectiveVector(float(i), float(-i))) for i in range(10)]
        random.Random(1).shuffle(anti)
        ranked, depths = rank_by_fronts(anti)
        anti_ok = ranked == list(range(9, -1, -1)) and depths == [1] * 10

        rng = random.Random(202)
        violations = 0
        for _ in range(1000):
            vecs = [random_vector(rng) for _ in range(rng.randint(2, 24))]
            ranked, depths = rank_by_fronts(list(enumerate(vecs)))
            depth_of = dict(zip(ranked, depths))
            for i, vi in enumerate(vecs):
                for j, vj in enumerate(vecs):
                    if vi.dominates(vj) and depth_of[i] >= depth_of[j]:
                        violations += 1
        ok = chain_ok and anti_ok and violations == 0
        report_criterion(
            2, "front peeling never ranks dominated above dominator", ok,
            f"chain={chain_ok} antichain={anti_ok} fuzz violations={violations}",
        )
        assert ok


class TestCriterion3AssemblyConsistency:
    def test_shared_pointers_resolve_identically(self):
        space = build_space(
            layer_types=("dense", "dropout"), width_range=(4, 16),
            input_shape=(8,), output_units=2,
        )
        violations = []
        networks_checked = 0
        networks_with_sharing = 0
        for seed in range(5):
            settings = EvolutionSettings(
                module_population_size=24, blueprint_population_size=10,
                assembled_count=30, module_species_target=4,
                add_node_prob=0.2, add_connection_prob=0.2, seed=seed,
            )
            state = initial_state(space, settings)
            backend = surrogate_backend()
            for _ in range(6):
                evolve_generation(state, backend)
            blueprints = {b.id: b for b in state.blueprint_pop.all_members()}
            live = set(state.module_pop.species_ids())
            nets = assemble_networks(
                state.blueprint_pop, state.module_pop, 200, space, state.rng,
                id_prefix=f"s{seed}_",
            )
            for net in nets:
                networks_checked += 1
                bp = blueprints[net.blueprint_id]
                by_pointer: dict[int, set[int]] = {}
                for node in bp.nodes:
                    chosen = net.node_modules[node.innovation]
                    by_pointer.setdefault(node.species_pointer, set()).add(chosen)
                if any(len(v) > 1 for n in bp.nodes for v in [by_pointer[n.species_pointer]]):
                    violations.append(f"{net.network_id}: mixed modules for one pointer")
                if len(bp.nodes) > len(by_pointer):
                    networks_with_sharing += 1
                for pointer, chosen in by_pointer.items():
                    if pointer in live:
                        members = {
                            m.id for m in state.module_pop.find_species(pointer).members
                        }
                        if not chosen <= members:
                            violations.append(
                                f"{net.network_id}: module outside species {pointer}"
                            )
                # The layer graph itself must agree with the recorded mapping.
                parsed: dict[int, int] = {}
                for layer in net.network.layers:
                    m = re.match(r"b(\d+)m(\d+)n\d+$", layer.id)
                    if m:
                        parsed[int(m.group(1))] = int(m.group(2))
                if parsed != net.node_modules:
                    violations.append(f"{net.network_id}: layer ids disagree")
        ok = (
            not violations
            and networks_checked >= 1000
            and networks_with_sharing >= 100
        )
        report_criterion(
            3, "same species pointer yields the same module", ok,
            f"{networks_checked} assemblies, {networks_with_sharing} with shared "
            f"pointers, {len(violations)} violations",
        )
        assert ok, violations[:5]


class TestCriterion4AttributionReplay:
    def replay_matches(self, backend, seed) -> tuple[int, int]:
        space = build_space(
            layer_types=("dense", "dropout"), width_range=(4, 16),
            input_shape=(8,), output_units=2,
        )
        settings = EvolutionSettings(
            module_population_size=16, blueprint_population_size=8,
            assembled_count=20, module_species_target=3, seed=seed,
        )
        state = initial_state(space, settings)
        checked = mismatched = 0
        for _ in range(4):
            art = evolve_generation(state, backend)
            acc: dict[int, list] = {}
            for row in art.eval_rows:
                for cid in [row["blueprint_id"]] + row["module_ids"]:
                    cell = acc.setdefault(cid, [0.0, 0.0, 0])
                    cell[0] += row["primary"]
                    cell[1] += -row["raw_secondary"]
                    cell[2] += 1
            for cid, (p_sum, s_sum, n) in acc.items():
                checked += 1
                stored = art.attributed.get(cid)
                if stored != (p_sum / n, s_sum / n):
                    mismatched += 1
        return checked, mismatched

    def test_stored_fitness_reproducible_from_logs(self):
        checked_a, bad_a = self.replay_matches(surrogate_backend(), seed=3)
        noisy = LocalBackend(
            NoisyEvaluator(SurrogateEvaluator(SurrogateConfig()), sigma=0.05, seed=9)
        )
        checked_b, bad_b = self.replay_matches(noisy, seed=4)
        ok = bad_a == bad_b == 0 and checked_a > 50 and checked_b > 50
        report_criterion(
            4, "fitness attribution replays exactly from raw logs", ok,
            f"deterministic {checked_a} checked, noisy {checked_b} checked, "
            f"{bad_a + bad_b} mismatches",
        )
        assert ok


def final_best(space, settings) -> float:
    state = initial_state(space, settings)
    backend = surrogate_backend(SurrogateConfig())
    for _ in range(30):
        evolve_generation(state, backend)
    return state.best.primary


class TestCriterion5EvolutionBeatsRandom:
    def test_paired_seeds_favor_selection(self):
        space = build_space(
            layer_types=("conv1d", "lstm", "gru", "dropout"),
            input_shape=(32, 16), output_units=2,
        )
        started = time.monotonic()
        wins = 0
        margins = []
        for seed in range(20):
            evolved = final_best(space, EvolutionSettings(seed=seed))
            baseline = final_best(
                space,
                EvolutionSettings(
                    seed=seed, random_search=True,
                    tournament_size=1, truncation_fraction=0.0,
                ),
            )
            margins.append(evolved - baseline)
            if evolved > baseline:
                wins += 1
        elapsed = time.monotonic() - started
        ok = wins >= 16 and elapsed < 300.0
        report_criterion(
            5, "evolution beats random search at equal budget", ok,
            f"{wins}/20 wins, mean margin {sum(margins) / len(margins):+.4f}, "
            f"{elapsed:.1f}s",
        )
        assert ok


def archive_front(space, settings, generations) -> list[ObjectiveVector]:
    """Front over every network the run ever evaluated successfully."""
    state = initial_state(space, settings)
    backend = LocalBackend(
        SurrogateEvaluator(SurrogateConfig(param_target=150_000, param_weight=0.02))
    )
    archive: list[ObjectiveVector] = []
    for _ in range(generations):
        art = evolve_generation(state, backend)
        archive.extend(
            ObjectiveVector.of(r["primary"], r["raw_secondary"])
            for r in art.eval_rows
            if r["status"] == "ok"
        )
    return [v for _, v in pareto_front(list(enumerate(archive)))]


class TestCriterion6MultiobjectiveDominance:
    def test_multi_front_covers_single_front(self):
        space = build_space(
            layer_types=("conv1d", "lstm", "gru"),
            input_shape=(32, 16), output_units=2,
        )
        started = time.monotonic()
        covered = 0
        for seed in range(10):
            multi = archive_front(
                space, EvolutionSettings(seed=seed, objective_mode="multi"), 40
            )
            single = archive_front(
                space, EvolutionSettings(seed=seed, objective_mode="single"), 40
            )
            if front_covers(multi, single):
                covered += 1
        elapsed = time.monotonic() - started
        ok = covered >= 8
        report_criterion(
            6, "multiobjective front covers single-objective front", ok,
            f"{covered}/10 seed pairs, {elapsed:.1f}s",
        )
        assert ok


class TestCriterion7ParameterCounting:
    def test_fixtures_and_duplication_pattern(self):
        exact = sum(
            count_parameters(chain_net(shape, *specs)) == expected
            for shape, specs, expected in PARAM_FIXTURES
        )

        space = build_space(
            layer_types=("dense", "dropout"), width_range=(4, 16),
            input_shape=(8,), output_units=2,
        )
        module = ChromosomeGraph(
            kind=MODULE,
            nodes=[NodeGene(0, {
                "layer_type": "dense", "width": 12, "kernel_size": 1,
                "activation": "relu", "initializer": "glorot", "dropout_rate": 0.0,
            })],
            edges=[],
            id=77,
        )

        def chain_blueprint(length):
            from coevo.genome import EdgeGene

            nodes = [NodeGene(i, None, 1) for i in range(length)]
            edges = [EdgeGene(50 + i, i, i + 1) for i in range(length - 1)]
            return ChromosomeGraph(
                kind=BLUEPRINT, nodes=nodes, edges=edges,
                globals_table={"learning_rate": 1e-3, "optimizer": "adam",
                               "weight_decay": 1e-6},
                id=9,
            )

        def params(instances):
            bp = chain_blueprint(instances)
            net, _ = build_network(bp, {i: module for i in range(instances)}, space)
            analysis = analyze_network(net, space.input_shape)
            assert analysis.ok
            return analysis.param_count

        two, four = params(2), params(4)
        ok = exact == len(PARAM_FIXTURES) == 10 and four > two
        report_criterion(
            7, "hand-computed parameter counts match", ok,
            f"{exact}/10 fixtures exact; 4-instance {four} > 2-instance {two}",
        )
        assert ok


class TestCriterion8CompletionService:
    def test_fault_injection_and_unordered_delivery(self):
        total_violations = 0
        wrong_delivery = 0
        duplicates_exercised = 0
        for seed in range(100):
            task_count = 50 + (seed * 91) % 451
            out = run_fault_simulation(seed=seed, task_count=task_count)
            total_violations += len(out["violations"])
            duplicates_exercised += out["duplicate_returns"]
            if sorted(out["delivered_ids"]) != [f"t{i:04d}" for i in range(task_count)]:
                wrong_delivery += 1

        queue = CompletionQueue(task_timeout=10.0, max_retries=1)
        queue.submit(EvaluationTask("A", b"{}"))
        queue.submit(EvaluationTask("B", b"{}"))
        assert queue.worker_pull("w1").task_id == "A"
        assert queue.worker_pull("w2").task_id == "B"
        queue.worker_return(EvaluationResult("B", 0.1, 1.0))
        first = queue.next_result(timeout=0)
        queue.worker_return(EvaluationResult("A", 0.2, 2.0))
        second = queue.next_result(timeout=0)
        unordered_ok = (first.task_id, second.task_id) == ("B", "A")

        ok = (
            total_violations == 0
            and wrong_delivery == 0
            and duplicates_exercised > 0
            and unordered_ok
        )
        report_criterion(
            8, "completion service delivers exactly once under faults", ok,
            f"100 sims, {total_violations} violations, "
            f"{duplicates_exercised} duplicate returns absorbed, "
            f"B-before-A={unordered_ok}",
        )
        assert ok


ACCEPTANCE_RUN_CONFIG = {
    "search_space": {
        "layer_types": ["dense", "dropout"],
        "width_range": [4, 16],
        "input_shape": [8],
        "output_units": 2,
    },
    "evolution": {
        "module_population_size": 12,
        "blueprint_population_size": 6,
        "assembled_count": 15,
        "module_species_target": 3,
        "generations": 6,
        "checkpoint_every": 2,
        "seed": 5,
    },
}

LOG_NAMES = ("generations.jsonl", "evaluations.jsonl", "pareto_gen_6.csv",
             "best_network.json")


class OutageBackend:
    """Serves generations normally until the configured sweep, then dies."""

    def __init__(self, fail_on_call):
        self.inner = surrogate_backend()
        self.calls = 0
        self.fail_on_call = fail_on_call

    def evaluate(self, tasks):
        self.calls += 1
        if self.calls >= self.fail_on_call:
            raise EvaluatorUnreachable("injected outage")
        return self.inner.evaluate(tasks)

    def close(self):
        self.inner.close()


class TestCriterion9Determinism:
    def test_rerun_and_resume_are_byte_identical(self, tmp_path, monkeypatch):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps(ACCEPTANCE_RUN_CONFIG), "utf-8")

        def log_bytes(out: Path) -> dict[str, bytes]:
            return {name: (out / name).read_bytes() for name in LOG_NAMES}

        out_a, out_b, out_c = (tmp_path / n for n in ("a", "b", "c"))
        assert main(["run", "--config", str(cfg), "--out", str(out_a)]) == EXIT_OK
        assert main(["run", "--config", str(cfg), "--out", str(out_b)]) == EXIT_OK
        rerun_identical = log_bytes(out_a) == log_bytes(out_b)

        monkeypatch.setattr("coevo.cli.build_backend", lambda _: OutageBackend(5))
        assert main(["run", "--config", str(cfg), "--out", str(out_c)]) == EXIT_ABORTED
        monkeypatch.undo()
        assert main(["resume", "--checkpoint", str(out_c / "checkpoint_4.json")]) == EXIT_OK
        resume_identical = log_bytes(out_c) == log_bytes(out_a)

        ok = rerun_identical and resume_identical
        report_criterion(
            9, "reruns and resumed runs are byte-identical", ok,
            f"rerun={rerun_identical} resume-after-interrupt={resume_identical}",
        )
        assert ok


class TestCriterion10HyperparameterOnlyMode:
    def test_structure_frozen_globals_diverse(self):
        space = build_space(
            layer_types=("dense", "dropout"), width_range=(4, 16),
            input_shape=(8,), output_units=2,
        )
        settings = EvolutionSettings(
            module_population_size=20, blueprint_population_size=10,
            assembled_count=24, module_species_target=4,
            hyperparameters_only=True, seed=11,
        )
        state = initial_state(space, settings)
        module_sigs = {m.structural_signature() for m in state.module_pop.all_members()}
        blueprint_sigs = {
            b.structural_signature() for b in state.blueprint_pop.all_members()
        }
        backend = surrogate_backend()
        for _ in range(20):
            evolve_generation(state, backend)
        drifted = [
            m for m in state.module_pop.all_members()
            if m.structural_signature() not in module_sigs
        ] + [
            b for b in state.blueprint_pop.all_members()
            if b.structural_signature() not in blueprint_sigs
        ]
        globals_seen = {
            tuple(sorted(b.globals_table.items()))
            for b in state.blueprint_pop.all_members()
        }
        ok = not drifted and len(globals_seen) > 1
        report_criterion(
            10, "hyperparameter-only mode freezes structure", ok,
            f"{len(drifted)} structural drifts over 20 generations, "
            f"{len(globals_seen)} distinct global tables",
        )
        assert ok
