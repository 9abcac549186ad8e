"""Command line entry points: run, resume, report, worker."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

from .config import RunConfig, build_backend, build_evaluator, load_config, load_config_dict
from .coevolution import (
    CheckpointError,
    EvolutionState,
    evolve_generation,
    initial_state,
    state_from_checkpoint,
    state_to_checkpoint,
)
from .distrib import EvaluatorUnreachable, run_worker
from .search_space import ConfigurationError

log = logging.getLogger("coevo")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORTED = 3

PARETO_COLUMNS = ("generation", "network_id", "primary", "raw_secondary", "front_index")


def _setup_logging() -> None:
    level_name = os.environ.get("COEVO_LOG", "warning").upper()
    level = getattr(logging, level_name, logging.WARNING)
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _json_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


class RunDirectory:
    """Owns every file the loop writes; append-only within a run."""

    def __init__(self, path: Path, *, fresh: bool):
        self.path = path
        path.mkdir(parents=True, exist_ok=True)
        mode = "w" if fresh else "a"
        self._generations = open(path / "generations.jsonl", mode, encoding="utf-8")
        self._evaluations = open(path / "evaluations.jsonl", mode, encoding="utf-8")
        self._timings = open(path / "timings.jsonl", mode, encoding="utf-8")

    def write_effective_config(self, effective: dict) -> None:
        (self.path / "effective_config.json").write_text(
            json.dumps(effective, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    def append_generation(self, report: dict, eval_rows: list[dict], wall_time: float) -> None:
        self._generations.write(_json_line(report))
        self._generations.flush()
        for row in eval_rows:
            self._evaluations.write(_json_line(row))
        self._evaluations.flush()
        self._timings.write(_json_line({"generation": report["generation"], "wall_time": wall_time}))
        self._timings.flush()

    def write_pareto(self, generation: int, rows: list[dict]) -> None:
        target = self.path / f"pareto_gen_{generation}.csv"
        with open(target, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=PARETO_COLUMNS)
            writer.writeheader()
            for row in rows:
                writer.writerow(row)

    def write_checkpoint(self, state: EvolutionState, effective: dict) -> Path:
        target = self.path / f"checkpoint_{state.generation}.json"
        target.write_text(
            json.dumps(state_to_checkpoint(state, effective), sort_keys=True), encoding="utf-8"
        )
        return target

    def write_best(self, state: EvolutionState) -> None:
        if state.best is not None:
            (self.path / "best_network.json").write_bytes(state.best.network_json)

    def close(self) -> None:
        for fh in (self._generations, self._evaluations, self._timings):
            fh.close()


def run_loop(state: EvolutionState, cfg: RunConfig, rundir: RunDirectory) -> int:
    """Drive generations until done; checkpoints land on the configured cadence
    and always on the final generation."""
    backend = build_backend(cfg)
    try:
        while state.generation < cfg.generations:
            started = time.monotonic()
            try:
                artifacts = evolve_generation(state, backend)
            except EvaluatorUnreachable as exc:
                log.error("evaluation stalled: %s", exc)
                saved = rundir.write_checkpoint(state, cfg.effective)
                print(f"aborted: {exc}; state saved to {saved}", file=sys.stderr)
                return EXIT_ABORTED
            wall = time.monotonic() - started
            rundir.append_generation(artifacts.report, artifacts.eval_rows, wall)
            rundir.write_pareto(state.generation, artifacts.pareto_rows)
            if (
                state.generation % cfg.checkpoint_every == 0
                or state.generation == cfg.generations
            ):
                rundir.write_checkpoint(state, cfg.effective)
            best = artifacts.report["best_primary"]
            best_text = f"{best:.4f}" if best is not None else "n/a"
            print(
                f"generation {state.generation:3d}  best={best_text}  "
                f"mean={artifacts.report['mean_primary']:.4f}  "
                f"failures={artifacts.report['failures']}"
            )
        rundir.write_best(state)
        return EXIT_OK
    finally:
        backend.close()
        rundir.close()


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            raw = json.loads(Path(args.config).read_text("utf-8"))
            raw.setdefault("evolution", {})["seed"] = args.seed
            cfg = load_config_dict(raw)
    except ConfigurationError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else Path("coevo_out")
    rundir = RunDirectory(out, fresh=True)
    rundir.write_effective_config(cfg.effective)
    log.info("starting run in %s for %d generations", out, cfg.generations)
    state = initial_state(cfg.space, cfg.settings)
    return run_loop(state, cfg, rundir)


def cmd_resume(args) -> int:
    path = Path(args.checkpoint)
    if not path.exists():
        print(f"checkpoint not found: {path}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        data = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        print(f"checkpoint is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config_dict(data.get("config", {}))
        state = state_from_checkpoint(data, cfg.space, cfg.settings)
    except (ConfigurationError, CheckpointError) as exc:
        print(f"cannot resume: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if state.generation >= cfg.generations:
        print(
            f"checkpoint already covers all {cfg.generations} generations", file=sys.stderr
        )
        return EXIT_CONFIG
    out = Path(args.out) if args.out else path.parent
    rundir = RunDirectory(out, fresh=False)
    rundir.write_effective_config(cfg.effective)
    log.info("resuming from generation %d in %s", state.generation, out)
    return run_loop(state, cfg, rundir)


def cmd_report(args) -> int:
    rundir = Path(args.run)
    gen_file = rundir / "generations.jsonl"
    if not gen_file.exists():
        print(f"no run found in {rundir}", file=sys.stderr)
        return EXIT_CONFIG
    reports = [json.loads(line) for line in gen_file.read_text("utf-8").splitlines() if line]
    if not reports:
        print(f"{rundir}: no completed generations", file=sys.stderr)
        return EXIT_CONFIG
    wanted = args.generation
    if wanted is None:
        report = reports[-1]
    else:
        matches = [r for r in reports if r["generation"] == wanted]
        if not matches:
            print(f"generation {wanted} not recorded", file=sys.stderr)
            return EXIT_CONFIG
        report = matches[-1]
    g = report["generation"]
    print(f"run: {rundir}")
    print(f"generation {g} of {len(reports)} recorded")
    best = report["best_primary"]
    print(f"  best primary: {best:.6f}" if best is not None else "  best primary: n/a")
    print(f"  mean primary: {report['mean_primary']:.6f}")
    print(f"  networks: {report['networks']}  failures: {report['failures']}")
    module_sizes = ", ".join(f"{s['id']}:{s['size']}" for s in report["module_species"])
    blueprint_sizes = ", ".join(f"{s['id']}:{s['size']}" for s in report["blueprint_species"])
    print(f"  module species: {module_sizes}")
    print(f"  blueprint species: {blueprint_sizes}")
    front_file = rundir / f"pareto_gen_{g}.csv"
    if front_file.exists():
        with open(front_file, newline="", encoding="utf-8") as fh:
            first_front = [row for row in csv.DictReader(fh) if row["front_index"] == "1"]
        print(f"  pareto front ({len(first_front)} networks):")
        for row in first_front:
            print(
                f"    {row['network_id']}  primary={float(row['primary']):.6f}"
                f"  params={int(float(row['raw_secondary']))}"
            )
    best_net = rundir / "best_network.json"
    if best_net.exists():
        payload = json.loads(best_net.read_text("utf-8"))
        print(f"  best network: {len(payload['layers'])} layers")
    return EXIT_OK


def cmd_worker(args) -> int:
    evaluator_section = {"kind": "surrogate", "surrogate": {}}
    seed = 0
    if args.config:
        try:
            cfg = load_config(args.config)
        except ConfigurationError as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_CONFIG
        evaluator_section = dict(cfg.evaluator_section)
        if evaluator_section.get("kind") == "remote":
            # The service cannot evaluate through itself; fall back to the
            # structural scorer with any configured surrogate settings.
            evaluator_section["kind"] = "surrogate"
        seed = cfg.settings.seed
    evaluator = build_evaluator(evaluator_section, seed)
    worker_id = args.worker_id or f"worker-{os.getpid()}"
    log.info("worker %s connecting to %s:%d", worker_id, args.host, args.port)
    completed = run_worker(
        args.host,
        args.port,
        worker_id,
        evaluator,
        poll_interval=args.poll_interval,
        reconnect_attempts=args.reconnect_attempts,
    )
    print(f"{worker_id}: completed {completed} tasks")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coevo",
        description="Coevolve neural network blueprints and modules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="start a fresh evolution run")
    p_run.add_argument("--config", required=True, help="path to a JSON run configuration")
    p_run.add_argument("--seed", default=None, help="override evolution.seed")
    p_run.add_argument("--out", default=None, help="output directory (default: coevo_out)")
    p_run.set_defaults(func=cmd_run)

    p_resume = sub.add_parser("resume", help="continue a run from a checkpoint")
    p_resume.add_argument("--checkpoint", required=True, help="path to a checkpoint JSON")
    p_resume.add_argument(
        "--out", default=None, help="output directory (default: the checkpoint's directory)"
    )
    p_resume.set_defaults(func=cmd_resume)

    p_report = sub.add_parser("report", help="summarize a finished or running run")
    p_report.add_argument("--run", required=True, help="run output directory")
    p_report.add_argument("--generation", type=int, default=None, help="generation to show")
    p_report.set_defaults(func=cmd_report)

    p_worker = sub.add_parser("worker", help="serve evaluations to a completion service")
    p_worker.add_argument("--host", default="127.0.0.1")
    p_worker.add_argument("--port", type=int, required=True)
    p_worker.add_argument("--worker-id", default=None)
    p_worker.add_argument("--config", default=None, help="run config supplying evaluator settings")
    p_worker.add_argument("--poll-interval", type=float, default=0.05)
    p_worker.add_argument("--reconnect-attempts", type=int, default=5)
    p_worker.set_defaults(func=cmd_worker)
    return parser


def _coerce_seed(value):
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        return value


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is not None:
        args.seed = _coerce_seed(args.seed)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
