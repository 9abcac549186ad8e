"""Configuration loading: defaults, validation diagnostics, bundled presets,
and evaluator/backend wiring."""
import copy
import hashlib
import json
from pathlib import Path

import pytest

from coevo.config import (
    DEFAULTS,
    RunConfig,
    build_backend,
    build_evaluator,
    load_config,
    load_config_dict,
    validate_config,
)
from coevo.distrib import LocalBackend, RemoteBackend
from coevo.evaluation import EvaluationTask, NoisyEvaluator, SurrogateEvaluator
from coevo.network_ir import LayerSpec, NetworkGraph, serialize_network
from coevo.search_space import ConfigurationError


def problems_for(override: dict) -> list[str]:
    return validate_config(override)


class TestValidation:
    def test_empty_config_is_clean(self):
        assert validate_config({}) == []

    def test_defaults_are_self_consistent(self):
        assert validate_config(copy.deepcopy(DEFAULTS)) == []

    @pytest.mark.parametrize("override,needle", [
        ({"typo_section": {}}, "unknown section"),
        ({"evolution": {"population": 3}}, "unknown key evolution.population"),
        ({"search_space": {"layer_types": ["attention"]}}, "'attention'"),
        ({"search_space": {"layer_types": []}}, "non-empty"),
        ({"search_space": {"width_range": [64, 16]}}, "lo must be < hi"),
        ({"search_space": {"width_range": [1.5, 16]}}, "integers"),
        ({"search_space": {"width_range": [16]}}, "pair"),
        ({"search_space": {"kernel_sizes": [0]}}, "kernel_sizes"),
        ({"search_space": {"dropout_range": [0.0, 1.0]}}, "hi must be <="),
        ({"search_space": {"input_shape": [4, 4, 4, 4]}}, "1 to 3"),
        ({"search_space": {"input_shape": [0]}}, "positive"),
        ({"search_space": {"output_units": 0}}, "output_units"),
        ({"search_space": {"sigma_fraction": 1.5}}, "sigma_fraction"),
        ({"evolution": {"generations": 0}}, "generations"),
        ({"evolution": {"truncation_fraction": 1.0}}, "truncation_fraction"),
        ({"evolution": {"compatibility_threshold": 0}}, "compatibility_threshold"),
        ({"evolution": {"seed": True}}, "seed"),
        ({"evolution": {"random_search": "yes"}}, "boolean"),
        ({"objectives": {"mode": "both"}}, "'single' or 'multi'"),
        ({"evaluator": {"kind": "gpu"}}, "evaluator.kind"),
        ({"evaluator": {"parallelism": 0}}, "parallelism"),
        ({"evaluator": {"noise_sigma": -0.1}}, "noise_sigma"),
        ({"evaluator": {"surrogate": {"mystery": 1}}}, "evaluator.surrogate.mystery"),
        ({"evaluator": {"surrogate": {"param_target": "big"}}}, "must be a number"),
        ({"distrib": {"port": 70000}}, "port"),
        ({"distrib": {"max_retries": -1}}, "max_retries"),
        ({"distrib": {"patience": 0}}, "patience"),
    ])
    def test_single_problem_diagnostics(self, override, needle):
        problems = problems_for(override)
        assert len(problems) == 1, problems
        assert needle in problems[0]

    def test_species_target_cross_check(self):
        problems = problems_for({"evolution": {"module_species_target": 99}})
        assert any("module_species_target exceeds" in p for p in problems)

    def test_blueprint_target_cross_check(self):
        problems = problems_for({"evolution": {"blueprint_species_target": 23}})
        assert any("blueprint_species_target exceeds" in p for p in problems)

    def test_assembled_count_covers_blueprints(self):
        problems = problems_for({"evolution": {"assembled_count": 10}})
        assert any("every blueprint gets assembled" in p for p in problems)

    def test_many_problems_reported_together(self):
        problems = problems_for({
            "search_space": {"output_units": 0, "input_shape": []},
            "objectives": {"mode": "triple"},
        })
        assert len(problems) == 3

    def test_non_object_section(self):
        problems = problems_for({"evolution": 5})
        assert problems == ["section 'evolution' must be an object"]


class TestLoading:
    def test_empty_dict_yields_defaults(self):
        cfg = load_config_dict({})
        assert cfg.effective == DEFAULTS
        assert cfg.generations == 30
        assert cfg.checkpoint_every == 5
        assert cfg.settings.module_population_size == 56
        assert cfg.settings.objective_mode == "single"
        assert cfg.space.input_shape == (128, 64)

    def test_partial_override_deep_merges(self):
        cfg = load_config_dict({
            "evolution": {"seed": 9, "generations": 3},
            "objectives": {"mode": "multi"},
        })
        assert cfg.settings.seed == 9
        assert cfg.generations == 3
        assert cfg.settings.objective_mode == "multi"
        # Untouched siblings keep their defaults.
        assert cfg.settings.blueprint_population_size == 22
        assert cfg.effective["evolution"]["staleness_limit"] == 15

    def test_loading_never_mutates_defaults(self):
        before = copy.deepcopy(DEFAULTS)
        cfg = load_config_dict({"evaluator": {"train_config": {"epochs": 2}}})
        cfg.effective["evaluator"]["train_config"]["epochs"] = 99
        cfg.effective["search_space"]["layer_types"].append("dense")
        assert DEFAULTS == before

    def test_train_config_reaches_settings(self):
        cfg = load_config_dict({"evaluator": {"train_config": {"epochs": 2}}})
        assert cfg.settings.train_config == {"epochs": 2}

    def test_rejected_config_lists_problems(self):
        with pytest.raises(ConfigurationError, match="configuration rejected"):
            load_config_dict({"objectives": {"mode": "triple"}})

    def test_non_dict_rejected(self):
        with pytest.raises(ConfigurationError, match="JSON object"):
            load_config_dict([1, 2])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            load_config(tmp_path / "absent.json")

    def test_invalid_json_file(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json", "utf-8")
        with pytest.raises(ConfigurationError, match="not valid JSON"):
            load_config(p)

    def test_file_round_trip(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text(json.dumps({"evolution": {"seed": "alpha"}}), "utf-8")
        cfg = load_config(p)
        assert cfg.settings.seed == "alpha"


class TestBundledPresets:
    def preset_dir(self) -> Path:
        import coevo

        return Path(coevo.__file__).parent / "configs"

    def test_presets_exist(self):
        names = sorted(p.name for p in self.preset_dir().glob("*.json"))
        assert names == ["text-classify.json", "vision-multitask.json"]

    @pytest.mark.parametrize("name", ["text-classify.json", "vision-multitask.json"])
    def test_presets_load_cleanly(self, name):
        cfg = load_config(self.preset_dir() / name)
        assert isinstance(cfg, RunConfig)
        assert cfg.generations >= 1

    def test_vision_preset_enables_sharing(self):
        cfg = load_config(self.preset_dir() / "vision-multitask.json")
        assert cfg.space.weight_sharing is True
        assert cfg.space.input_shape == (224, 224, 3)
        assert cfg.space.min_pooling_layers == 4

    def test_text_preset_is_sequence_shaped(self):
        cfg = load_config(self.preset_dir() / "text-classify.json")
        assert cfg.space.input_shape == (128, 64)
        assert "lstm" in cfg.space.layer_types


def tiny_task(task_id="t0"):
    net = NetworkGraph(
        [
            LayerSpec("in", "input", {"shape": [8]}, []),
            LayerSpec("d", "dense", {"units": 4, "activation": "relu",
                                     "initializer": "glorot"}, ["in"]),
            LayerSpec("out", "output", {}, ["d"]),
        ],
        inputs=["in"],
        outputs=["out"],
    )
    return EvaluationTask(task_id, serialize_network(net), {})


class TestEvaluatorWiring:
    def test_surrogate_kind(self):
        ev = build_evaluator({"kind": "surrogate", "surrogate": {"param_target": 5e5}})
        assert isinstance(ev, SurrogateEvaluator)
        assert ev.config.param_target == 5e5

    def test_noisy_kind_wraps_surrogate(self):
        ev = build_evaluator({"kind": "noisy_surrogate", "noise_sigma": 0.1}, seed=4)
        assert isinstance(ev, NoisyEvaluator)
        assert ev.sigma == 0.1 and ev.seed == 4
        assert isinstance(ev.base, SurrogateEvaluator)

    def test_string_seed_hashes_deterministically(self):
        ev = build_evaluator({"kind": "noisy_surrogate"}, seed="trial-a")
        expected = int.from_bytes(
            hashlib.sha256(b"trial-a").digest()[:8], "big"
        )
        assert ev.seed == expected
        again = build_evaluator({"kind": "noisy_surrogate"}, seed="trial-a")
        assert again.evaluate(tiny_task()).primary == ev.evaluate(tiny_task()).primary

    def test_distinct_string_seeds_diverge(self):
        a = build_evaluator({"kind": "noisy_surrogate"}, seed="trial-a")
        b = build_evaluator({"kind": "noisy_surrogate"}, seed="trial-b")
        assert a.evaluate(tiny_task()).primary != b.evaluate(tiny_task()).primary


class TestBackendWiring:
    def test_local_backend(self):
        cfg = load_config_dict({"evaluator": {"parallelism": 3}})
        backend = build_backend(cfg)
        assert isinstance(backend, LocalBackend)
        assert backend.parallelism == 3
        backend.close()

    def test_remote_backend_binds_requested_interface(self):
        cfg = load_config_dict({
            "evaluator": {"kind": "remote"},
            "distrib": {"port": 0, "task_timeout": 5.0, "max_retries": 1},
        })
        backend = build_backend(cfg)
        try:
            assert isinstance(backend, RemoteBackend)
            host, port = backend.address
            assert host == "127.0.0.1" and port > 0
            assert backend.queue.task_timeout == 5.0
        finally:
            backend.close()
