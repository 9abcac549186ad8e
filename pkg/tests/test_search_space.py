"""Parameter specs, tables, and search-space construction."""
from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coevo.search_space import (
    BOOLEAN,
    CATEGORICAL,
    INTEGER,
    REAL,
    ConfigurationError,
    HyperparameterSpec,
    ParameterSet,
    SearchSpace,
    build_space,
)


class TestSpecValidation:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigurationError):
            HyperparameterSpec("x", "complex")

    def test_numeric_needs_range(self):
        with pytest.raises(ConfigurationError):
            HyperparameterSpec("x", REAL)

    def test_inverted_range_rejected(self):
        with pytest.raises(ConfigurationError):
            HyperparameterSpec("x", INTEGER, range=(5, 5))

    def test_categorical_needs_choices(self):
        with pytest.raises(ConfigurationError):
            HyperparameterSpec("x", CATEGORICAL)

    def test_sigma_fraction_bounds(self):
        with pytest.raises(ConfigurationError):
            HyperparameterSpec("x", REAL, range=(0, 1), mutation_sigma_fraction=1.5)


class TestSampling:
    def test_real_sample_in_range(self, rng):
        spec = HyperparameterSpec("lr", REAL, range=(0.1, 0.9))
        for _ in range(200):
            assert 0.1 <= spec.sample(rng) <= 0.9

    def test_integer_sample_in_range_and_int(self, rng):
        spec = HyperparameterSpec("w", INTEGER, range=(3, 9))
        values = {spec.sample(rng) for _ in range(200)}
        assert all(isinstance(v, int) and 3 <= v <= 9 for v in values)
        assert len(values) > 1

    def test_categorical_sample_from_choices(self, rng):
        spec = HyperparameterSpec("act", CATEGORICAL, choices=("a", "b", "c"))
        assert {spec.sample(rng) for _ in range(100)} <= {"a", "b", "c"}

    def test_boolean_sample(self, rng):
        spec = HyperparameterSpec("flag", BOOLEAN)
        assert {spec.sample(rng) for _ in range(50)} == {True, False}


class TestMutation:
    def test_long_mutation_chain_stays_in_range(self, rng):
        spec = HyperparameterSpec("lr", REAL, range=(0.0, 1.0), mutation_sigma_fraction=0.3)
        value = spec.sample(rng)
        for _ in range(10_000):
            value = spec.mutate(value, rng)
            assert 0.0 <= value <= 1.0

    def test_integer_chain_stays_int_and_in_range(self, rng):
        spec = HyperparameterSpec("w", INTEGER, range=(2, 40))
        value = spec.sample(rng)
        for _ in range(10_000):
            value = spec.mutate(value, rng)
            assert isinstance(value, int) and 2 <= value <= 40

    def test_boolean_mutation_flips(self, rng):
        spec = HyperparameterSpec("flag", BOOLEAN)
        assert spec.mutate(True, rng) is False
        assert spec.mutate(False, rng) is True

    def test_categorical_mutation_stays_legal(self, rng):
        spec = HyperparameterSpec("act", CATEGORICAL, choices=("a", "b"))
        assert all(spec.mutate("a", rng) in ("a", "b") for _ in range(50))

    @given(st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_real_mutation_clamped_property(self, start, seed):
        spec = HyperparameterSpec("p", REAL, range=(0.0, 1.0), mutation_sigma_fraction=0.5)
        out = spec.mutate(start, random.Random(seed))
        assert 0.0 <= out <= 1.0


class TestContainsAndDistance:
    def test_contains(self):
        real = HyperparameterSpec("r", REAL, range=(0.0, 1.0))
        integer = HyperparameterSpec("i", INTEGER, range=(1, 5))
        cat = HyperparameterSpec("c", CATEGORICAL, choices=("x",))
        flag = HyperparameterSpec("b", BOOLEAN)
        assert real.contains(0.5) and not real.contains(1.5)
        assert integer.contains(3) and not integer.contains(3.0) and not integer.contains(True)
        assert cat.contains("x") and not cat.contains("y")
        assert flag.contains(True) and not flag.contains(1)

    def test_normalized_distance(self):
        spec = HyperparameterSpec("w", INTEGER, range=(0, 10))
        assert spec.normalized_distance(0, 10) == 1.0
        assert spec.normalized_distance(5, 5) == 0.0
        assert spec.normalized_distance(2, 7) == spec.normalized_distance(7, 2) == 0.5
        cat = HyperparameterSpec("c", CATEGORICAL, choices=("x", "y"))
        assert cat.normalized_distance("x", "y") == 1.0
        assert cat.normalized_distance("x", "x") == 0.0


class TestParameterSet:
    def build(self):
        return ParameterSet(
            (
                HyperparameterSpec("width", INTEGER, range=(2, 8)),
                HyperparameterSpec("act", CATEGORICAL, choices=("a", "b")),
                HyperparameterSpec("rate", REAL, range=(0.0, 1.0)),
            )
        )

    def test_duplicate_names_rejected(self):
        with pytest.raises(ConfigurationError):
            ParameterSet(
                (
                    HyperparameterSpec("x", BOOLEAN),
                    HyperparameterSpec("x", BOOLEAN),
                )
            )

    def test_sample_table_has_all_keys(self, rng):
        table = self.build().sample_table(rng)
        assert set(table) == {"width", "act", "rate"}

    def test_mutate_table_prob_zero_is_identity(self, rng):
        ps = self.build()
        table = ps.sample_table(rng)
        assert ps.mutate_table(table, rng, 0.0) == table

    def test_mutate_table_stays_valid(self, rng):
        ps = self.build()
        table = ps.sample_table(rng)
        for _ in range(200):
            table = ps.mutate_table(table, rng, 1.0)
            assert ps.validate_table(table) == []

    def test_validate_table_reports_problems(self):
        ps = self.build()
        problems = ps.validate_table({"width": 99, "act": "z", "extra": 1})
        text = " | ".join(problems)
        assert "width" in text and "act" in text
        assert "extra" in text and "rate" in text

    def test_table_distance_is_mean(self):
        ps = self.build()
        a = {"width": 2, "act": "a", "rate": 0.0}
        b = {"width": 8, "act": "a", "rate": 0.0}
        # width moved the full range; the other two match: (1 + 0 + 0) / 3.
        assert ps.table_distance(a, b) == pytest.approx(1 / 3)
        assert ps.table_distance(a, a) == 0.0


class TestSearchSpace:
    def test_build_space_layer_types(self):
        space = build_space(layer_types=("dense", "dropout"), input_shape=(8,))
        assert space.layer_types == ("dense", "dropout")
        assert len(space.node_params) == 6
        assert len(space.global_params) == 3

    def test_input_rank_validated(self):
        with pytest.raises(ConfigurationError):
            build_space(layer_types=("dense",), input_shape=(2, 2, 2, 2))

    def test_output_units_validated(self):
        with pytest.raises(ConfigurationError):
            build_space(layer_types=("dense",), input_shape=(8,), output_units=0)

    def test_min_pooling_validated(self):
        with pytest.raises(ConfigurationError):
            build_space(layer_types=("dense",), input_shape=(8,), min_pooling_layers=-1)

    def test_empty_node_params_rejected(self):
        with pytest.raises(ConfigurationError):
            SearchSpace(
                node_params=ParameterSet(()),
                global_params=ParameterSet((HyperparameterSpec("b", BOOLEAN),)),
                input_shape=(8,),
                output_units=2,
            )
