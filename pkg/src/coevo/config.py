"""Run configuration: JSON schema, defaults, validation, and object wiring."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .coevolution import EvolutionSettings
from .distrib import LocalBackend, RemoteBackend
from .evaluation import NoisyEvaluator, SurrogateConfig, SurrogateEvaluator
from .search_space import ConfigurationError, SearchSpace, build_space

_LAYER_TOKENS = ("conv1d", "conv2d", "dense", "lstm", "gru", "dropout")

DEFAULTS: dict = {
    "search_space": {
        "layer_types": ["conv1d", "lstm", "gru", "dropout"],
        "width_range": [64, 192],
        "kernel_sizes": [1, 3, 5, 7],
        "activations": ["relu", "linear", "elu", "selu"],
        "initializers": ["glorot", "he"],
        "dropout_range": [0.0, 0.5],
        "learning_rate_range": [1e-4, 1e-2],
        "optimizers": ["adam", "sgd"],
        "weight_decay_range": [1e-9, 1e-3],
        "input_shape": [128, 64],
        "output_units": 2,
        "min_pooling_layers": 0,
        "weight_sharing": False,
        "sigma_fraction": 0.15,
    },
    "evolution": {
        "module_population_size": 56,
        "blueprint_population_size": 22,
        "assembled_count": 100,
        "module_species_target": 4,
        "blueprint_species_target": 1,
        "generations": 30,
        "seed": 0,
        "add_node_prob": 0.05,
        "add_connection_prob": 0.05,
        "param_mutation_prob": 0.1,
        "crossover_prob": 0.3,
        "truncation_fraction": 0.5,
        "staleness_limit": 15,
        "tournament_size": 2,
        "compatibility_threshold": 1.0,
        "compat_structural": 1.0,
        "compat_parametric": 1.0,
        "hyperparameters_only": False,
        "random_search": False,
        "checkpoint_every": 5,
    },
    "objectives": {"mode": "single", "secondary_sort": False},
    "evaluator": {
        "kind": "surrogate",
        "parallelism": 1,
        "noise_sigma": 0.02,
        "surrogate": {},
        "train_config": {},
    },
    "distrib": {
        "host": "127.0.0.1",
        "port": 0,
        "task_timeout": 30.0,
        "max_retries": 2,
        "idle_timeout": 60.0,
        "patience": 60.0,
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _check_range(problems, section, key, value, *, lo_min=None, hi_max=None, integer=False):
    where = f"{section}.{key}"
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(_is_num(v) for v in value)
    ):
        problems.append(f"{where} must be a [lo, hi] pair of numbers")
        return
    lo, hi = value
    if integer and not all(_is_int(v) for v in value):
        problems.append(f"{where} must contain integers")
    if lo >= hi:
        problems.append(f"{where}: lo must be < hi, got [{lo}, {hi}]")
    if lo_min is not None and lo < lo_min:
        problems.append(f"{where}: lo must be >= {lo_min}")
    if hi_max is not None and hi > hi_max:
        problems.append(f"{where}: hi must be <= {hi_max}")


def validate_config(data: dict) -> list[str]:
    """Every problem found, phrased for humans; empty list means usable."""
    problems: list[str] = []
    for section in data:
        if section not in DEFAULTS:
            problems.append(f"unknown section {section!r}")
    for section, defaults in DEFAULTS.items():
        given = data.get(section, {})
        if not isinstance(given, dict):
            problems.append(f"section {section!r} must be an object")
            continue
        for key in given:
            if key not in defaults:
                problems.append(f"unknown key {section}.{key}")

    ss = data.get("search_space", {})
    if isinstance(ss, dict):
        lt = ss.get("layer_types", DEFAULTS["search_space"]["layer_types"])
        if not isinstance(lt, list) or not lt:
            problems.append("search_space.layer_types must be a non-empty list")
        else:
            for t in lt:
                if t not in _LAYER_TOKENS:
                    problems.append(
                        f"search_space.layer_types entry {t!r} not one of {_LAYER_TOKENS}"
                    )
        _check_range(problems, "search_space", "width_range",
                     ss.get("width_range", DEFAULTS["search_space"]["width_range"]),
                     lo_min=1, integer=True)
        ks = ss.get("kernel_sizes", DEFAULTS["search_space"]["kernel_sizes"])
        if not isinstance(ks, list) or not ks or not all(_is_int(k) and k >= 1 for k in ks):
            problems.append("search_space.kernel_sizes must be a non-empty list of ints >= 1")
        _check_range(problems, "search_space", "dropout_range",
                     ss.get("dropout_range", DEFAULTS["search_space"]["dropout_range"]),
                     lo_min=0.0, hi_max=0.99)
        _check_range(problems, "search_space", "learning_rate_range",
                     ss.get("learning_rate_range", DEFAULTS["search_space"]["learning_rate_range"]),
                     lo_min=0.0)
        _check_range(problems, "search_space", "weight_decay_range",
                     ss.get("weight_decay_range", DEFAULTS["search_space"]["weight_decay_range"]),
                     lo_min=0.0)
        for key in ("activations", "initializers", "optimizers"):
            val = ss.get(key, DEFAULTS["search_space"][key])
            if not isinstance(val, list) or not val:
                problems.append(f"search_space.{key} must be a non-empty list")
        shape = ss.get("input_shape", DEFAULTS["search_space"]["input_shape"])
        if (
            not isinstance(shape, list)
            or not 1 <= len(shape) <= 3
            or not all(_is_int(d) and d >= 1 for d in shape)
        ):
            problems.append("search_space.input_shape must be 1 to 3 positive ints")
        if not _is_int(ss.get("output_units", 2)) or ss.get("output_units", 2) < 1:
            problems.append("search_space.output_units must be an int >= 1")
        if not _is_int(ss.get("min_pooling_layers", 0)) or ss.get("min_pooling_layers", 0) < 0:
            problems.append("search_space.min_pooling_layers must be an int >= 0")
        if not isinstance(ss.get("weight_sharing", False), bool):
            problems.append("search_space.weight_sharing must be a boolean")
        sf = ss.get("sigma_fraction", 0.15)
        if not _is_num(sf) or not 0.0 <= sf <= 1.0:
            problems.append("search_space.sigma_fraction must lie in [0, 1]")

    ev = data.get("evolution", {})
    if isinstance(ev, dict):
        def evi(key):
            return ev.get(key, DEFAULTS["evolution"][key])

        for key in ("module_population_size", "blueprint_population_size", "assembled_count",
                    "generations", "checkpoint_every", "staleness_limit", "tournament_size"):
            if not _is_int(evi(key)) or evi(key) < 1:
                problems.append(f"evolution.{key} must be an int >= 1")
        for key in ("module_species_target", "blueprint_species_target"):
            if not _is_int(evi(key)) or evi(key) < 1:
                problems.append(f"evolution.{key} must be an int >= 1")
        if (
            _is_int(evi("module_species_target"))
            and _is_int(evi("module_population_size"))
            and evi("module_species_target") > evi("module_population_size")
        ):
            problems.append("evolution.module_species_target exceeds the module population size")
        if (
            _is_int(evi("blueprint_species_target"))
            and _is_int(evi("blueprint_population_size"))
            and evi("blueprint_species_target") > evi("blueprint_population_size")
        ):
            problems.append("evolution.blueprint_species_target exceeds the blueprint population size")
        if (
            _is_int(evi("assembled_count"))
            and _is_int(evi("blueprint_population_size"))
            and evi("assembled_count") < evi("blueprint_population_size")
        ):
            problems.append(
                "evolution.assembled_count must be >= blueprint_population_size "
                "so every blueprint gets assembled"
            )
        for key in ("add_node_prob", "add_connection_prob", "param_mutation_prob", "crossover_prob"):
            if not _is_num(evi(key)) or not 0.0 <= evi(key) <= 1.0:
                problems.append(f"evolution.{key} must lie in [0, 1]")
        tf = evi("truncation_fraction")
        if not _is_num(tf) or not 0.0 <= tf < 1.0:
            problems.append("evolution.truncation_fraction must lie in [0, 1)")
        if not _is_num(evi("compatibility_threshold")) or evi("compatibility_threshold") <= 0:
            problems.append("evolution.compatibility_threshold must be > 0")
        for key in ("compat_structural", "compat_parametric"):
            if not _is_num(evi(key)) or evi(key) < 0:
                problems.append(f"evolution.{key} must be >= 0")
        for key in ("hyperparameters_only", "random_search"):
            if not isinstance(evi(key), bool):
                problems.append(f"evolution.{key} must be a boolean")
        if not isinstance(evi("seed"), (int, str)) or isinstance(evi("seed"), bool):
            problems.append("evolution.seed must be an integer or a string")

    ob = data.get("objectives", {})
    if isinstance(ob, dict):
        mode = ob.get("mode", "single")
        if mode not in ("single", "multi"):
            problems.append("objectives.mode must be 'single' or 'multi'")
        if not isinstance(ob.get("secondary_sort", False), bool):
            problems.append("objectives.secondary_sort must be a boolean")

    ec = data.get("evaluator", {})
    if isinstance(ec, dict):
        kind = ec.get("kind", "surrogate")
        if kind not in ("surrogate", "noisy_surrogate", "remote"):
            problems.append("evaluator.kind must be surrogate, noisy_surrogate, or remote")
        par = ec.get("parallelism", 1)
        if not _is_int(par) or par < 1:
            problems.append("evaluator.parallelism must be an int >= 1")
        sig = ec.get("noise_sigma", 0.02)
        if not _is_num(sig) or sig < 0:
            problems.append("evaluator.noise_sigma must be >= 0")
        sur = ec.get("surrogate", {})
        if not isinstance(sur, dict):
            problems.append("evaluator.surrogate must be an object")
        else:
            known = set(SurrogateConfig.__dataclass_fields__)
            for key, val in sur.items():
                if key not in known:
                    problems.append(f"unknown key evaluator.surrogate.{key}")
                elif not _is_num(val):
                    problems.append(f"evaluator.surrogate.{key} must be a number")
        if not isinstance(ec.get("train_config", {}), dict):
            problems.append("evaluator.train_config must be an object")

    dc = data.get("distrib", {})
    if isinstance(dc, dict):
        if not isinstance(dc.get("host", "x"), str):
            problems.append("distrib.host must be a string")
        port = dc.get("port", 0)
        if not _is_int(port) or not 0 <= port <= 65535:
            problems.append("distrib.port must be an int in [0, 65535]")
        for key in ("task_timeout", "idle_timeout", "patience"):
            val = dc.get(key, 1.0)
            if not _is_num(val) or val <= 0:
                problems.append(f"distrib.{key} must be > 0")
        mr = dc.get("max_retries", 2)
        if not _is_int(mr) or mr < 0:
            problems.append("distrib.max_retries must be an int >= 0")

    return problems


@dataclass
class RunConfig:
    effective: dict
    space: SearchSpace
    settings: EvolutionSettings
    generations: int
    checkpoint_every: int

    @property
    def evaluator_section(self) -> dict:
        return self.effective["evaluator"]

    @property
    def distrib_section(self) -> dict:
        return self.effective["distrib"]


def load_config_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a JSON object")
    problems = validate_config(data)
    if problems:
        raise ConfigurationError(
            "configuration rejected:\n  - " + "\n  - ".join(problems)
        )
    effective = _deep_merge(DEFAULTS, data)
    ss = effective["search_space"]
    space = build_space(
        layer_types=ss["layer_types"],
        width_range=ss["width_range"],
        kernel_sizes=ss["kernel_sizes"],
        activations=ss["activations"],
        initializers=ss["initializers"],
        dropout_range=ss["dropout_range"],
        learning_rate_range=ss["learning_rate_range"],
        optimizers=ss["optimizers"],
        weight_decay_range=ss["weight_decay_range"],
        input_shape=ss["input_shape"],
        output_units=ss["output_units"],
        min_pooling_layers=ss["min_pooling_layers"],
        weight_sharing=ss["weight_sharing"],
        sigma_fraction=ss["sigma_fraction"],
    )
    ev = effective["evolution"]
    ob = effective["objectives"]
    settings = EvolutionSettings(
        module_population_size=ev["module_population_size"],
        blueprint_population_size=ev["blueprint_population_size"],
        assembled_count=ev["assembled_count"],
        module_species_target=ev["module_species_target"],
        blueprint_species_target=ev["blueprint_species_target"],
        add_node_prob=ev["add_node_prob"],
        add_connection_prob=ev["add_connection_prob"],
        param_mutation_prob=ev["param_mutation_prob"],
        crossover_prob=ev["crossover_prob"],
        truncation_fraction=ev["truncation_fraction"],
        staleness_limit=ev["staleness_limit"],
        tournament_size=ev["tournament_size"],
        compatibility_threshold=ev["compatibility_threshold"],
        compat_structural=ev["compat_structural"],
        compat_parametric=ev["compat_parametric"],
        hyperparameters_only=ev["hyperparameters_only"],
        random_search=ev["random_search"],
        objective_mode=ob["mode"],
        secondary_sort=ob["secondary_sort"],
        seed=ev["seed"],
        train_config=effective["evaluator"]["train_config"],
    )
    return RunConfig(
        effective=effective,
        space=space,
        settings=settings,
        generations=ev["generations"],
        checkpoint_every=ev["checkpoint_every"],
    )


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"configuration file not found: {p}")
    try:
        data = json.loads(p.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"configuration is not valid JSON: {exc}") from exc
    return load_config_dict(data)


def build_evaluator(evaluator_section: dict, seed: int | str = 0):
    surrogate = SurrogateEvaluator(SurrogateConfig.from_dict(evaluator_section.get("surrogate", {})))
    if evaluator_section.get("kind") == "noisy_surrogate":
        if isinstance(seed, str):
            # Stable across processes, unlike hash().
            seed = int.from_bytes(hashlib.sha256(seed.encode("utf-8")).digest()[:8], "big")
        return NoisyEvaluator(surrogate, sigma=evaluator_section.get("noise_sigma", 0.02), seed=seed)
    return surrogate


def build_backend(cfg: RunConfig):
    """Local in-process evaluation, or a listening completion service."""
    section = cfg.evaluator_section
    if section["kind"] == "remote":
        d = cfg.distrib_section
        return RemoteBackend(
            host=d["host"],
            port=d["port"],
            task_timeout=d["task_timeout"],
            max_retries=d["max_retries"],
            idle_timeout=d["idle_timeout"],
            patience=d["patience"],
        )
    evaluator = build_evaluator(section, cfg.settings.seed)
    return LocalBackend(evaluator, parallelism=section["parallelism"])
