"""Evaluation tasks, results, and the built-in network scorers.

The deterministic surrogate scores a network purely from graph structure,
which keeps full evolution runs fast and exactly reproducible. A noise
wrapper turns it into a stochastic stand-in for real training, seeded per
task so repeated evaluation of the same task id returns the same value.
"""
from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .network_ir import (
    COMPUTE_KINDS,
    OP_CONCAT,
    NetworkGraph,
    analyze_network,
    deserialize_network,
    topological_layers,
)


@dataclass(frozen=True)
class EvaluationTask:
    task_id: str
    network_json: bytes
    train_config: dict = field(default_factory=dict)

    def to_message(self) -> dict:
        return {
            "type": "task",
            "task_id": self.task_id,
            "network_json": self.network_json.decode("utf-8"),
            "train_config": dict(self.train_config),
        }

    @classmethod
    def from_message(cls, msg: dict) -> "EvaluationTask":
        return cls(
            task_id=msg["task_id"],
            network_json=msg["network_json"].encode("utf-8"),
            train_config=dict(msg.get("train_config", {})),
        )


@dataclass(frozen=True)
class EvaluationResult:
    task_id: str
    primary: float
    raw_secondary: float
    status: str = "ok"
    worker_id: str = ""
    duration: float = 0.0
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_message(self) -> dict:
        msg = {
            "type": "result",
            "task_id": self.task_id,
            "primary": self.primary,
            "raw_secondary": self.raw_secondary,
            "status": self.status,
            "worker_id": self.worker_id,
            "duration": self.duration,
        }
        if self.reason:
            msg["reason"] = self.reason
        return msg

    @classmethod
    def from_message(cls, msg: dict) -> "EvaluationResult":
        return cls(
            task_id=msg["task_id"],
            primary=float(msg["primary"]),
            raw_secondary=float(msg["raw_secondary"]),
            status=msg.get("status", "ok"),
            worker_id=msg.get("worker_id", ""),
            duration=float(msg.get("duration", 0.0)),
            reason=msg.get("reason", ""),
        )


def failed_result(task_id: str, reason: str, worker_id: str = "") -> EvaluationResult:
    return EvaluationResult(task_id, 0.0, 0.0, status="failed", worker_id=worker_id, reason=reason)


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def graph_descriptors(net: NetworkGraph, param_count: int) -> dict:
    """Structure summary used by the surrogate: effective depth (longest
    chain of compute layers), distinct compute kinds, and merge count."""
    depth: dict[str, int] = {}
    kinds: set[str] = set()
    merges = 0
    best = 0
    for layer in topological_layers(net):
        d = max((depth[src] for src in layer.inbound), default=0)
        if layer.op_kind in COMPUTE_KINDS:
            d += 1
            kinds.add(layer.op_kind)
        elif layer.op_kind == OP_CONCAT:
            merges += 1
        depth[layer.id] = d
        best = max(best, d)
    return {
        "depth": best,
        "distinct_kinds": len(kinds),
        "merges": merges,
        "params": param_count,
    }


@dataclass(frozen=True)
class SurrogateConfig:
    """Targets and weights for the structural fitness score.

    The score rewards depth up to ``depth_target``, a diverse mix of layer
    kinds, and branching up to ``branch_target``, while charging for
    parameters relative to ``param_target``. All terms are capped so the
    final value stays in [0, 1].
    """

    depth_target: int = 12
    branch_target: int = 4
    param_target: int = 2_000_000
    kind_count: int = 6
    depth_weight: float = 0.4
    diversity_weight: float = 0.25
    branch_weight: float = 0.25
    param_weight: float = 0.15

    @classmethod
    def from_dict(cls, data: dict) -> "SurrogateConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


class SurrogateEvaluator:
    """Deterministic structural scorer. Invalid networks fail cleanly."""

    deterministic = True

    def __init__(self, config: SurrogateConfig | None = None):
        self.config = config or SurrogateConfig()

    def score(self, net: NetworkGraph, param_count: int) -> float:
        c = self.config
        d = graph_descriptors(net, param_count)
        value = (
            c.depth_weight * min(1.0, d["depth"] / c.depth_target)
            + c.diversity_weight * min(1.0, d["distinct_kinds"] / c.kind_count)
            + c.branch_weight * min(1.0, d["merges"] / c.branch_target)
            - c.param_weight * min(1.0, d["params"] / c.param_target)
        )
        return _clamp01(value)

    def evaluate(self, task: EvaluationTask) -> EvaluationResult:
        try:
            net = deserialize_network(task.network_json)
            analysis = analyze_network(net)
            if not analysis.ok:
                return failed_result(task.task_id, "; ".join(analysis.violations))
            primary = self.score(net, analysis.param_count)
            return EvaluationResult(task.task_id, primary, float(analysis.param_count))
        except Exception as exc:
            return failed_result(task.task_id, f"{type(exc).__name__}: {exc}")


class NoisyEvaluator:
    """Adds seeded Gaussian noise to another evaluator's primary score.

    The noise stream is derived from (seed, task_id), so re-running a task
    reproduces its value while distinct tasks see independent draws.
    """

    deterministic = False

    def __init__(self, base, sigma: float = 0.02, seed: int = 0):
        self.base = base
        self.sigma = sigma
        self.seed = seed

    def evaluate(self, task: EvaluationTask) -> EvaluationResult:
        result = self.base.evaluate(task)
        if not result.ok:
            return result
        noise = random.Random(f"{self.seed}:{task.task_id}").gauss(0.0, self.sigma)
        return replace(result, primary=result.primary + noise)


def evaluate_local(
    tasks: list[EvaluationTask], evaluator, parallelism: int = 1
) -> list[EvaluationResult]:
    """Run every task through the evaluator, optionally across threads.

    The returned list lines up with the task list regardless of which
    evaluation finished first; evaluator exceptions become failed results.
    """

    def run(task: EvaluationTask) -> EvaluationResult:
        try:
            return evaluator.evaluate(task)
        except Exception as exc:
            return failed_result(task.task_id, f"{type(exc).__name__}: {exc}")

    if parallelism <= 1 or len(tasks) <= 1:
        return [run(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(run, tasks))
