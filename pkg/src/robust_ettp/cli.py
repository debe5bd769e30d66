"""Command line entry point: ``robust-ettp <subcommand>``.

Subcommands: gen, solve, evaluate, experiment, room-assign. Each accepts
``--seed``, ``--out`` and ``--profile``. Failures exit nonzero and print one
JSON object ``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import yaml

from . import io
from .annealer import AnnealParams, anneal
from .generator import SCENARIOS, generate_instance, resolve_scenario
from .harness import (
    PROFILES,
    ConfigError,
    ExperimentConfig,
    instance_streams,
    load_config,
    robustness_csv,
    run_experiment,
    run_log_csv,
)
from .model import Weights
from .robustness import evaluate
from .room_assign import SlotProblem, find_feasible, find_pcbett_optimal, min_ratio

log = logging.getLogger("robust_ettp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--seed", type=int, help="master seed (default 0, or the config file's)")
    p.add_argument("--out", help=out_help)
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk", help="default scale (default desk)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _weights(text: str) -> Weights:
    try:
        parts = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad weights {text!r}") from None
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("weights need four comma-separated values w1,w2,w3,w4")
    return Weights(*parts)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robust-ettp", description="Robust examination timetabling experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate instances from a scenario")
    _common(g, "output directory, or a .json path when --count is 1")
    g.add_argument("--scenario", default="scenario1", help=f"preset ({', '.join(SCENARIOS)}) or a YAML/JSON file")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--suppress-seed-conflicts", action="store_true")

    s = sub.add_parser("solve", help="anneal one instance")
    _common(s, "timetable JSON path (run log goes next to it)")
    s.add_argument("--instance", required=True)
    s.add_argument("--iterations", type=int)
    s.add_argument("--cooling-limit", type=int)
    s.add_argument("--repetitions", type=int)
    s.add_argument("--pcbett", action="store_true")
    s.add_argument("--weights", type=_weights, default=Weights())
    s.add_argument("--lambda", dest="period_spread", type=int)
    s.add_argument("--delta-scale", type=float)
    s.add_argument("--log", help="run-log CSV path (default <out>.log.csv)")

    e = sub.add_parser("evaluate", help="disturbance study of one timetable")
    _common(e, "CSV report path (default stdout)")
    e.add_argument("--instance", required=True)
    e.add_argument("--timetable", required=True)
    e.add_argument("--reps", type=int)
    e.add_argument("--sigma", type=float, default=0.2)

    x = sub.add_parser("experiment", help="full batch: generate, solve both variants, evaluate")
    _common(x, "output directory (required)")
    x.add_argument("--config", help="YAML experiment config")
    x.add_argument("--scenario", action="append", help="preset name; repeatable")
    x.add_argument("--instances", type=int)
    x.add_argument("--instance-dir", help="also run every instance JSON in this directory")
    x.add_argument("--workers", type=int)

    r = sub.add_parser("room-assign", help="solve one slot's room assignment")
    _common(r, "assignment JSON path (default stdout)")
    r.add_argument("--slot", required=True, help="slot JSON: rooms, exams and optional locked patterns")
    r.add_argument("--pcbett", action="store_true", help="maximize the smallest capacity/demand ratio")
    return parser


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_scenario(name: str, suppress: bool):
    path = Path(name)
    if name not in SCENARIOS and path.suffix in (".yaml", ".yml", ".json") and path.exists():
        return resolve_scenario(yaml.safe_load(path.read_text()), suppress or None)
    return resolve_scenario(name, suppress or None)


def cmd_gen(args) -> None:
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    config = _load_scenario(args.scenario, args.suppress_seed_conflicts)
    label = Path(args.scenario).stem
    out = Path(args.out or ".")
    for k in range(args.count):
        # same fan-out as the experiment harness, so instance k matches its experiment twin
        gen_seed = instance_streams(args.seed, label, k)[0]
        instance, seed_assignment = generate_instance(config, gen_seed)
        path = out if (args.count == 1 and out.suffix == ".json") else out / f"{label}_{k:03d}.json"
        io.save_instance(instance, path)
        io.save_timetable(seed_assignment.timetable, io.seed_path(path))
        print(path)


def _anneal_params(args) -> AnnealParams:
    prof = PROFILES[args.profile]
    weights = args.weights
    if args.period_spread is not None:
        weights = replace(weights, period_spread=args.period_spread)
    return AnnealParams(
        iterations=args.iterations or prof["iterations"],
        cooling_limit=args.cooling_limit or prof["cooling_limit"],
        repetitions=args.repetitions or prof["repetitions"],
        pcbett=args.pcbett,
        weights=weights,
        delta_scale=args.delta_scale,
        seed=args.seed,
    )


def cmd_solve(args) -> None:
    instance = io.load_instance(args.instance)
    params = _anneal_params(args)
    if params.iterations < params.cooling_limit:
        params = replace(params, cooling_limit=params.iterations)
    result = anneal(instance, params)
    out = Path(args.out or Path(args.instance).with_suffix(".tt.json"))
    io.save_timetable(result.timetable, out)
    log_path = Path(args.log) if args.log else out.with_name(out.stem + ".log.csv")
    log_path.write_text(run_log_csv(result))
    pen = result.penalties
    print(json.dumps({
        "timetable": str(out), "log": str(log_path),
        "s1": pen.s1, "s2": pen.s2, "s3": pen.s3,
        "s4_min_ratio": round(pen.s4_min_ratio, 5), "objective": round(pen.weighted, 5),
    }, sort_keys=True))


def cmd_evaluate(args) -> None:
    instance = io.load_instance(args.instance)
    tt = io.load_timetable(args.timetable)
    reps = args.reps or PROFILES[args.profile]["disturbance_repetitions"]
    report = evaluate(instance, tt, reps, args.sigma, args.seed)
    _emit(robustness_csv(report), args.out)


def cmd_experiment(args) -> None:
    if not args.out:
        raise UsageError("experiment needs --out DIR")
    config = load_config(args.config, args.profile) if args.config else ExperimentConfig.from_profile(args.profile)
    if args.seed is not None:
        config.master_seed = args.seed
    if args.scenario:
        config.scenarios = {name: resolve_scenario(name) for name in args.scenario}
    if args.instances is not None:
        config.instances_per_scenario = args.instances
    if args.instance_dir:
        config.instance_dir = Path(args.instance_dir)
    if args.workers is not None:
        config.workers = args.workers
    result = run_experiment(config, args.out)
    for row in result.rows:
        print(
            f"{row.scenario:>12} {row.mode:>8}  n={row.instances} excl={row.excluded}  "
            f"weighted={row.weighted:.2f}  s4={row.s4_min_ratio:.4f}  "
            f"disturbed={row.unmodified:.3f}/{row.heuristic:.3f}/{row.complete:.3f}"
        )


def slot_problem_from_dict(data: dict) -> SlotProblem:
    try:
        locked = {int(item["exam"]): frozenset(item["rooms"]) for item in data.get("locked", [])}
        return SlotProblem(
            exams=tuple((x["id"], x["students"]) for x in data["exams"]),
            rooms=tuple((x["id"], x["capacity"]) for x in data["rooms"]),
            locked=locked,
        )
    except (KeyError, TypeError) as exc:
        raise io.FormatError(f"malformed slot: {exc!r}") from exc


def cmd_room_assign(args) -> None:
    problem = slot_problem_from_dict(io.load_json(args.slot))
    solve = find_pcbett_optimal if args.pcbett else find_feasible
    found = solve(problem)
    if found is None:
        body = {"feasible": False}
    else:
        body = {
            "feasible": True,
            "min_ratio": round(min_ratio(problem, found), 5),
            "assignments": [{"exam": e, "rooms": sorted(found[e])} for e, _ in problem.exams],
        }
    _emit(json.dumps(body, indent=1, sort_keys=True) + "\n", args.out)


COMMANDS = {
    "gen": cmd_gen,
    "solve": cmd_solve,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
    "room-assign": cmd_room_assign,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.seed is None and args.command != "experiment":
            args.seed = 0
        level = logging.WARNING - 10 * min(args.verbose, 2)
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except (ConfigError, io.FormatError, ValueError, OSError, RuntimeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
