"""Produce the cross-component conformance fixtures.

Outputs two files under remote-trainer/fixtures/:
  networks.json   100 evolved interchange networks with expected parameter
                  counts, spanning dense, temporal, and vision spaces with
                  and without weight sharing.
  protocol.json   golden wire frames (hex) for every message type.

Run from the repository root: python3 tools/generate_fixtures.py
"""
from __future__ import annotations

import json
from pathlib import Path

from coevo.coevolution import EvolutionSettings, evolve_generation, initial_state
from coevo.distrib import LocalBackend, encode_message
from coevo.evaluation import EvaluationTask, SurrogateConfig, SurrogateEvaluator
from coevo.network_ir import count_parameters, deserialize_network, serialize_network
from coevo.search_space import build_space

OUT_DIR = Path(__file__).resolve().parent.parent / "remote-trainer" / "fixtures"

SPACES = [
    (
        "dense",
        build_space(
            layer_types=("dense", "dropout"), width_range=(4, 16),
            input_shape=(8,), output_units=2,
        ),
    ),
    (
        "temporal",
        build_space(
            layer_types=("conv1d", "lstm", "gru", "dropout"), width_range=(4, 16),
            kernel_sizes=(1, 3), input_shape=(32, 16), output_units=2,
        ),
    ),
    (
        "temporal_shared",
        build_space(
            layer_types=("conv1d", "lstm", "gru", "dropout"), width_range=(4, 16),
            kernel_sizes=(1, 3), input_shape=(32, 16), output_units=2,
            weight_sharing=True,
        ),
    ),
    (
        "vision_shared",
        build_space(
            layer_types=("conv2d", "dropout"), width_range=(4, 16),
            kernel_sizes=(1, 3), input_shape=(16, 16, 3), output_units=4,
            min_pooling_layers=2, weight_sharing=True,
        ),
    ),
]

PER_SPACE = 25
GENERATIONS = 6


def evolved_networks(space, label: str) -> list[dict]:
    settings = EvolutionSettings(
        module_population_size=20, blueprint_population_size=8,
        assembled_count=24, module_species_target=4,
        add_node_prob=0.25, add_connection_prob=0.4,
        seed=f"fixtures:{label}",
    )
    state = initial_state(space, settings)
    backend = LocalBackend(SurrogateEvaluator(SurrogateConfig()))
    pool: list[bytes] = []
    seen: set[bytes] = set()
    for _ in range(GENERATIONS):
        artifacts = evolve_generation(state, backend)
        for net in artifacts.networks:
            if net.status != "ok":
                continue
            raw = serialize_network(net.network)
            if raw not in seen:
                seen.add(raw)
                pool.append(raw)
    if len(pool) < PER_SPACE:
        raise SystemExit(f"{label}: only {len(pool)} unique networks, wanted {PER_SPACE}")

    # Merge layers only evolve once connection mutations pile up, so take
    # every fan-in network first and spread the rest across the whole run.
    merged = [raw for raw in pool if b'"concat_merge"' in raw]
    rest = [raw for raw in pool if b'"concat_merge"' not in raw]
    picked = merged[: PER_SPACE // 2]
    remaining = PER_SPACE - len(picked)
    step = max(1, len(rest) // remaining)
    picked.extend(rest[::step][:remaining])
    if len(picked) < PER_SPACE:
        picked.extend(merged[PER_SPACE // 2 :][: PER_SPACE - len(picked)])

    rows: list[dict] = []
    for raw in picked:
        # Re-count from the wire bytes so the fixture never trusts the
        # in-memory object.
        net = deserialize_network(raw)
        rows.append(
            {
                "name": f"{label}_{len(rows):03d}",
                "space": label,
                "expected_params": count_parameters(net),
                "shared_key_layers": sum(1 for l in net.layers if "shared_key" in l.attrs),
                "network_json": raw.decode("utf-8"),
            }
        )
    return rows


def protocol_vectors() -> list[dict]:
    tiny = deserialize_network(json.dumps({
        "format_version": "1",
        "layers": [
            {"id": "in", "op_kind": "input", "attrs": {"shape": [4]}, "inbound": []},
            {"id": "d", "op_kind": "dense",
             "attrs": {"units": 3, "activation": "relu", "initializer": "glorot"},
             "inbound": ["in"]},
            {"id": "out", "op_kind": "output", "attrs": {}, "inbound": ["d"]},
        ],
        "inputs": ["in"],
        "outputs": ["out"],
        "globals": {"learning_rate": 0.0025, "optimizer": "adam", "weight_decay": 1e-06},
    }))
    task_msg = EvaluationTask("t0001", serialize_network(tiny), {"epochs": 3}).to_message()
    # Non-integral floats so both JSON writers print identical shortest forms.
    messages = [
        ("hello", {"type": "hello", "proto": 1, "worker_id": "w1"}),
        ("hello_ack", {"type": "ack", "proto": 1}),
        ("pull", {"type": "pull", "worker_id": "w1"}),
        ("empty", {"type": "empty"}),
        ("task", task_msg),
        ("result", {
            "type": "result", "task_id": "t0001", "primary": 0.75,
            "raw_secondary": 19.5, "status": "ok", "worker_id": "w1",
            "duration": 0.125,
        }),
        ("result_ack", {"type": "ack", "accepted": True}),
        ("result_failed", {
            "type": "result", "task_id": "t0002", "primary": 0.5,
            "raw_secondary": 0.5, "status": "failed", "worker_id": "w1",
            "duration": 0.25, "reason": "unknown op_kind 'attention'",
        }),
        ("error", {"type": "error", "message": "unknown message type 'nope'"}),
    ]
    return [
        {"name": name, "message": msg, "hex": encode_message(msg).hex()}
        for name, msg in messages
    ]


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    corpus: list[dict] = []
    for label, space in SPACES:
        rows = evolved_networks(space, label)
        sharing = sum(1 for r in rows if r["shared_key_layers"] > 0)
        print(f"{label}: {len(rows)} networks, {sharing} with shared keys")
        corpus.extend(rows)
    (OUT_DIR / "networks.json").write_text(
        json.dumps(corpus, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"networks.json: {len(corpus)} networks")

    vectors = protocol_vectors()
    (OUT_DIR / "protocol.json").write_text(
        json.dumps(vectors, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"protocol.json: {len(vectors)} frames")


if __name__ == "__main__":
    main()
