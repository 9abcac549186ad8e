"""Shared fixtures, small graph builders, and the fault-injection simulator."""
from __future__ import annotations

import random

import pytest

from coevo.distrib import CompletionQueue
from coevo.evaluation import EvaluationResult, EvaluationTask
from coevo.network_ir import LayerSpec, NetworkGraph
from coevo.search_space import build_space

ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, name: str, ok: bool, detail: str = "") -> str:
    verdict = "PASS" if ok else "FAIL"
    line = f"criterion {number:2d} {verdict}: {name}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def flat_space():
    """Rank-1 input space: dense and dropout layers only."""
    return build_space(
        layer_types=("dense", "dropout"),
        width_range=(4, 16),
        input_shape=(8,),
        output_units=2,
    )


@pytest.fixture
def temporal_space():
    """Rank-2 input space covering the sequence layer kinds."""
    return build_space(
        layer_types=("conv1d", "lstm", "gru", "dropout"),
        width_range=(4, 16),
        kernel_sizes=(1, 3),
        input_shape=(32, 16),
        output_units=2,
    )


@pytest.fixture
def vision_space():
    """Rank-3 input space with 2D convolutions and mandatory pooling."""
    return build_space(
        layer_types=("conv2d", "dropout"),
        width_range=(4, 16),
        kernel_sizes=(1, 3),
        input_shape=(16, 16, 3),
        output_units=4,
        min_pooling_layers=2,
    )


def make_net(layer_rows, inputs=("in",), outputs=("out",), globals_table=None) -> NetworkGraph:
    """Terse graph builder: rows of (id, op_kind, attrs, inbound)."""
    layers = [LayerSpec(lid, op, dict(attrs), list(inbound)) for lid, op, attrs, inbound in layer_rows]
    return NetworkGraph(layers, list(inputs), list(outputs), dict(globals_table or {}))


def chain_net(input_shape, *specs) -> NetworkGraph:
    """A straight input->...->output chain from (op_kind, attrs) pairs."""
    rows = [("in", "input", {"shape": list(input_shape)}, [])]
    prev = "in"
    for i, (op, attrs) in enumerate(specs):
        lid = f"l{i}"
        rows.append((lid, op, attrs, [prev]))
        prev = lid
    rows.append(("out", "output", {}, [prev]))
    return make_net(rows)


def run_fault_simulation(
    seed: int,
    task_count: int,
    worker_count: int = 16,
    crash_rate: float = 0.3,
    task_timeout: float = 10.0,
    max_retries: int = 50,
) -> dict:
    """Drive a CompletionQueue on a logical clock with crashing workers.

    Each step a worker either pulls, crashes (silently dropping its task),
    finishes (returning a result, occasionally twice to exercise idempotency),
    or keeps working. Returns counters plus every partition violation seen.
    """
    sim = random.Random(seed)
    clock = {"now": 0.0}
    queue = CompletionQueue(
        task_timeout=task_timeout, max_retries=max_retries, clock=lambda: clock["now"]
    )
    for i in range(task_count):
        queue.submit(EvaluationTask(f"t{i:04d}", b"{}"))

    holding: dict[int, EvaluationTask | None] = {w: None for w in range(worker_count)}
    delivered: list[EvaluationResult] = []
    violations: list[str] = []
    duplicate_returns = 0

    def check_partition():
        snap = queue.snapshot()
        pending, in_flight = snap["pending"], snap["in_flight"]
        finished = set(snap["finished"])
        overlap = (set(pending) & set(in_flight)) | (set(pending) & finished) | (
            set(in_flight) & finished
        )
        if overlap:
            violations.append(f"task in two states at once: {sorted(overlap)}")
        if len(pending) != len(set(pending)):
            violations.append("duplicate task in pending")

    steps = 0
    while len(delivered) < task_count and steps < 200_000:
        steps += 1
        clock["now"] += 1.0
        if steps % 7 == 0:
            queue.reap_timeouts()
        w = sim.randrange(worker_count)
        task = holding[w]
        if task is None:
            holding[w] = queue.worker_pull(f"w{w}")
        elif sim.random() < crash_rate:
            holding[w] = None  # crash: the attempt vanishes without a return
        elif sim.random() < 0.5:
            result = EvaluationResult(task.task_id, 0.5, 1.0, worker_id=f"w{w}")
            queue.worker_return(result)
            if sim.random() < 0.1:  # retry race: send the same completion again
                duplicate_returns += 1
                queue.worker_return(result)
            holding[w] = None
        if steps % 13 == 0:
            check_partition()
        while True:
            result = queue.next_result(timeout=0)
            if result is None:
                break
            delivered.append(result)

    check_partition()
    delivered_ids = [r.task_id for r in delivered]
    if len(delivered_ids) != len(set(delivered_ids)):
        violations.append("a task delivered more than one result")
    return {
        "delivered": delivered,
        "delivered_ids": delivered_ids,
        "violations": violations,
        "duplicate_returns": duplicate_returns,
        "stats": queue.stats,
        "steps": steps,
    }
