"""Hyperparameter search spaces: typed parameter specs, value tables, sampling and mutation."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

REAL = "real"
INTEGER = "integer"
CATEGORICAL = "categorical"
BOOLEAN = "boolean"

_KINDS = (REAL, INTEGER, CATEGORICAL, BOOLEAN)


class ConfigurationError(ValueError):
    """Invalid search space or run configuration."""


@dataclass(frozen=True)
class HyperparameterSpec:
    """One named parameter: its kind, its legal values, and how it mutates.

    ``range`` is the inclusive [lo, hi] interval for real/integer kinds.
    ``choices`` is the token list for categorical kinds.
    ``mutation_sigma_fraction`` scales Gaussian mutation noise as a fraction
    of the range width (real/integer only).
    """

    name: str
    kind: str
    range: tuple[float, float] | None = None
    choices: tuple = ()
    mutation_sigma_fraction: float = 0.15

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind in (REAL, INTEGER):
            if self.range is None:
                raise ConfigurationError(f"{self.name}: {self.kind} parameter needs a range")
            lo, hi = self.range
            if not lo < hi:
                raise ConfigurationError(f"{self.name}: range lo must be < hi, got [{lo}, {hi}]")
            if not 0.0 <= self.mutation_sigma_fraction <= 1.0:
                raise ConfigurationError(
                    f"{self.name}: mutation_sigma_fraction must lie in [0, 1]"
                )
        if self.kind == CATEGORICAL and not self.choices:
            raise ConfigurationError(f"{self.name}: categorical parameter needs choices")

    def sample(self, rng: random.Random):
        if self.kind == REAL:
            lo, hi = self.range
            return rng.uniform(lo, hi)
        if self.kind == INTEGER:
            lo, hi = self.range
            return rng.randint(int(lo), int(hi))
        if self.kind == CATEGORICAL:
            return rng.choice(self.choices)
        return rng.random() < 0.5

    def mutate(self, value, rng: random.Random):
        """One mutation step: Gaussian perturbation (clamped) for numeric kinds,
        bit flip for booleans, uniform resample for categoricals."""
        if self.kind == REAL:
            lo, hi = self.range
            sigma = self.mutation_sigma_fraction * (hi - lo)
            return self.clamp(value + rng.gauss(0.0, sigma))
        if self.kind == INTEGER:
            lo, hi = self.range
            sigma = self.mutation_sigma_fraction * (hi - lo)
            return self.clamp(round(value + rng.gauss(0.0, sigma)))
        if self.kind == CATEGORICAL:
            return rng.choice(self.choices)
        return not value

    def clamp(self, value):
        lo, hi = self.range
        if self.kind == INTEGER:
            return int(min(int(hi), max(int(lo), int(value))))
        return min(hi, max(lo, value))

    def contains(self, value) -> bool:
        if self.kind == REAL:
            lo, hi = self.range
            return isinstance(value, (int, float)) and lo <= value <= hi
        if self.kind == INTEGER:
            lo, hi = self.range
            return isinstance(value, int) and not isinstance(value, bool) and lo <= value <= hi
        if self.kind == CATEGORICAL:
            return value in self.choices
        return isinstance(value, bool)

    def normalized_distance(self, a, b) -> float:
        """Distance between two legal values, scaled into [0, 1]."""
        if self.kind in (REAL, INTEGER):
            lo, hi = self.range
            return abs(a - b) / (hi - lo)
        return 0.0 if a == b else 1.0


@dataclass(frozen=True)
class ParameterSet:
    """An ordered collection of specs; tables are plain name -> value dicts."""

    specs: tuple[HyperparameterSpec, ...]

    def __post_init__(self):
        names = [s.name for s in self.specs]
        if len(names) != len(set(names)):
            raise ConfigurationError(f"duplicate parameter names: {names}")

    def __len__(self):
        return len(self.specs)

    def __getitem__(self, name: str) -> HyperparameterSpec:
        for s in self.specs:
            if s.name == name:
                return s
        raise KeyError(name)

    def sample_table(self, rng: random.Random) -> dict:
        return {s.name: s.sample(rng) for s in self.specs}

    def mutate_table(self, table: dict, rng: random.Random, prob: float) -> dict:
        """Independently mutate each entry with probability ``prob``."""
        out = dict(table)
        for s in self.specs:
            if rng.random() < prob:
                out[s.name] = s.mutate(out[s.name], rng)
        return out

    def validate_table(self, table: dict) -> list[str]:
        problems = []
        known = {s.name for s in self.specs}
        for key in table:
            if key not in known:
                problems.append(f"unknown parameter {key!r}")
        for s in self.specs:
            if s.name not in table:
                problems.append(f"missing parameter {s.name!r}")
            elif not s.contains(table[s.name]):
                problems.append(f"{s.name}={table[s.name]!r} outside its spec")
        return problems

    def table_distance(self, a: dict, b: dict) -> float:
        """Mean per-parameter normalized distance, in [0, 1]."""
        if not self.specs:
            return 0.0
        total = sum(s.normalized_distance(a[s.name], b[s.name]) for s in self.specs)
        return total / len(self.specs)


@dataclass(frozen=True)
class SearchSpace:
    """The full problem definition: node-level and network-global parameters,
    the tensor interface of the task, and assembly-time constraints."""

    node_params: ParameterSet
    global_params: ParameterSet
    input_shape: tuple[int, ...]
    output_units: int
    min_pooling_layers: int = 0
    weight_sharing: bool = False

    def __post_init__(self):
        if len(self.node_params) == 0:
            raise ConfigurationError("empty search space: no node parameters")
        if len(self.input_shape) not in (1, 2, 3):
            raise ConfigurationError(f"input_shape must have rank 1..3, got {self.input_shape}")
        if self.output_units < 1:
            raise ConfigurationError("output_units must be >= 1")
        if self.min_pooling_layers < 0:
            raise ConfigurationError("min_pooling_layers must be >= 0")

    @property
    def layer_types(self) -> tuple:
        return self.node_params["layer_type"].choices


def build_space(
    *,
    layer_types,
    width_range=(16, 64),
    kernel_sizes=(1, 3),
    activations=("relu", "linear", "elu", "selu"),
    initializers=("glorot", "he"),
    dropout_range=(0.0, 0.5),
    learning_rate_range=(1e-4, 1e-2),
    optimizers=("adam", "sgd"),
    weight_decay_range=(1e-9, 1e-3),
    input_shape,
    output_units=2,
    min_pooling_layers=0,
    weight_sharing=False,
    sigma_fraction=0.15,
) -> SearchSpace:
    """Assemble a SearchSpace from flat range/choice arguments.

    This is the single constructor used by run configs, bundled presets,
    and tests; all module nodes carry the same table layout regardless of
    which layer type a node currently expresses.
    """
    node = ParameterSet(
        (
            HyperparameterSpec("layer_type", CATEGORICAL, choices=tuple(layer_types)),
            HyperparameterSpec(
                "width", INTEGER, range=tuple(width_range), mutation_sigma_fraction=sigma_fraction
            ),
            HyperparameterSpec("kernel_size", CATEGORICAL, choices=tuple(kernel_sizes)),
            HyperparameterSpec("activation", CATEGORICAL, choices=tuple(activations)),
            HyperparameterSpec("initializer", CATEGORICAL, choices=tuple(initializers)),
            HyperparameterSpec(
                "dropout_rate",
                REAL,
                range=tuple(dropout_range),
                mutation_sigma_fraction=sigma_fraction,
            ),
        )
    )
    glob = ParameterSet(
        (
            HyperparameterSpec(
                "learning_rate",
                REAL,
                range=tuple(learning_rate_range),
                mutation_sigma_fraction=sigma_fraction,
            ),
            HyperparameterSpec("optimizer", CATEGORICAL, choices=tuple(optimizers)),
            HyperparameterSpec(
                "weight_decay",
                REAL,
                range=tuple(weight_decay_range),
                mutation_sigma_fraction=sigma_fraction,
            ),
        )
    )
    return SearchSpace(
        node_params=node,
        global_params=glob,
        input_shape=tuple(input_shape),
        output_units=output_units,
        min_pooling_layers=min_pooling_layers,
        weight_sharing=weight_sharing,
    )
