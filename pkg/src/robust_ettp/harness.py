"""Batch experiments: generate instances, solve both variants, measure robustness.

Every instance of an experiment gets its own seed sequence derived from the
master seed, the scenario label and the instance index, so any single
instance can be re-run in isolation and the outputs do not depend on the
worker count.
"""

from __future__ import annotations

import csv
import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from io import StringIO
from pathlib import Path
from statistics import fmean
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from . import io
from .annealer import AnnealParams, AnnealResult, HeuristicFailure, anneal
from .generator import SCENARIOS, ScenarioConfig, generate_instance, resolve_scenario
from .model import Weights, check_hard, describe
from .robustness import RobustnessReport, evaluate

log = logging.getLogger(__name__)

MODES = ("nominal", "pcbett")

PROFILES: Dict[str, dict] = {
    "desk": dict(iterations=10_000, cooling_limit=1_000, repetitions=2, instances=5, disturbance_repetitions=20),
    "paper": dict(iterations=50_000, cooling_limit=5_000, repetitions=8, instances=20, disturbance_repetitions=100),
}

FLOAT_FORMAT = "{:.5f}"


class ConfigError(ValueError):
    pass


def mode_params(base: AnnealParams, mode: str) -> AnnealParams:
    """Nominal runs drop the robustness term entirely; PCBETT runs keep w4."""
    if mode == "nominal":
        return replace(base, pcbett=False, weights=replace(base.weights, w4=0.0))
    if mode == "pcbett":
        return replace(base, pcbett=True)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class ExperimentConfig:
    scenarios: Dict[str, ScenarioConfig] = field(default_factory=lambda: {"scenario1": SCENARIOS["scenario1"]})
    instances_per_scenario: int = 20
    anneal: AnnealParams = field(default_factory=AnnealParams)
    disturbance_repetitions: int = 100
    sigma_factor: float = 0.2
    master_seed: int = 0
    instance_dir: Optional[Path] = None
    workers: int = 1

    def problems(self) -> List[str]:
        out = []
        if self.instances_per_scenario < 1:
            out.append("instances_per_scenario must be >= 1")
        if self.disturbance_repetitions < 1:
            out.append("disturbance_repetitions must be >= 1")
        if self.sigma_factor < 0:
            out.append("sigma_factor must be nonnegative")
        if self.workers < 1:
            out.append("workers must be >= 1")
        if not self.scenarios and self.instance_dir is None:
            out.append("no scenarios and no instance_dir")
        for label, sc in self.scenarios.items():
            out += [f"{label}: {p}" for p in sc.problems()]
        out += [f"anneal: {p}" for p in self.anneal.problems()]
        return out

    def params(self, mode: str) -> AnnealParams:
        return mode_params(self.anneal, mode)

    def to_dict(self) -> dict:
        """Plain data describing the run; the output directory is deliberately left out."""
        anneal_d = asdict(self.anneal)
        return {
            "scenarios": {k: v.to_dict() for k, v in self.scenarios.items()},
            "instances_per_scenario": self.instances_per_scenario,
            "anneal": anneal_d,
            "disturbance_repetitions": self.disturbance_repetitions,
            "sigma_factor": self.sigma_factor,
            "master_seed": self.master_seed,
            "instance_dir": None if self.instance_dir is None else str(self.instance_dir),
        }

    @classmethod
    def from_profile(cls, profile: str = "desk", **overrides) -> "ExperimentConfig":
        try:
            prof = PROFILES[profile]
        except KeyError:
            raise ConfigError(f"unknown profile {profile!r}; choose from {', '.join(PROFILES)}") from None
        anneal_params = AnnealParams(
            iterations=prof["iterations"], cooling_limit=prof["cooling_limit"], repetitions=prof["repetitions"]
        )
        base = cls(
            instances_per_scenario=prof["instances"],
            anneal=anneal_params,
            disturbance_repetitions=prof["disturbance_repetitions"],
        )
        return replace(base, **overrides)


def _scenario_entries(entries) -> Dict[str, ScenarioConfig]:
    out: Dict[str, ScenarioConfig] = {}
    for entry in entries:
        if isinstance(entry, str):
            out[entry] = resolve_scenario(entry)
        elif isinstance(entry, dict):
            entry = dict(entry)
            label = entry.pop("label", None)
            preset = entry.pop("preset", None)
            if label is None:
                raise ConfigError("custom scenario entries need a 'label'")
            base = resolve_scenario(preset).to_dict() if preset else {}
            base.update(entry.pop("overrides", None) or {})
            base.update(entry)
            try:
                out[label] = ScenarioConfig.from_dict(base)
            except TypeError as exc:
                raise ConfigError(f"scenario {label!r}: {exc}") from None
        else:
            raise ConfigError(f"bad scenario entry {entry!r}")
    return out


def config_from_dict(data: dict, profile: Optional[str] = None) -> ExperimentConfig:
    """Build a config from the YAML layout; unknown keys are rejected."""
    data = dict(data or {})
    profile = data.pop("profile", None) or profile or "desk"
    cfg = ExperimentConfig.from_profile(profile)
    known = {
        "scenarios", "instances_per_scenario", "anneal", "disturbance_repetitions",
        "sigma_factor", "master_seed", "instance_dir", "workers",
    }
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "scenarios" in data:
        cfg.scenarios = _scenario_entries(data["scenarios"] or [])
    if "anneal" in data:
        ad = dict(data["anneal"] or {})
        if "weights" in ad:
            ad["weights"] = Weights(**ad["weights"])
        try:
            cfg.anneal = replace(cfg.anneal, **ad)
        except TypeError as exc:
            raise ConfigError(f"anneal: {exc}") from None
    for key in ("instances_per_scenario", "disturbance_repetitions", "master_seed", "workers"):
        if key in data:
            setattr(cfg, key, int(data[key]))
    if "sigma_factor" in data:
        cfg.sigma_factor = float(data["sigma_factor"])
    if data.get("instance_dir"):
        cfg.instance_dir = Path(data["instance_dir"])
    return cfg


def load_config(path: Union[str, Path], profile: Optional[str] = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data or {}, profile)


def instance_seed(master_seed: int, label: str, index: int) -> np.random.SeedSequence:
    """Seed of one instance: master seed, then (crc32 of scenario label, index)."""
    return np.random.SeedSequence(master_seed, spawn_key=(zlib.crc32(label.encode()), index))


def instance_streams(master_seed: int, label: str, index: int) -> Tuple[np.random.SeedSequence, ...]:
    """(generation, annealing, disturbance) seeds of one instance."""
    return tuple(instance_seed(master_seed, label, index).spawn(3))


@dataclass(frozen=True)
class ModeResult:
    s1: int
    s2: int
    s3: int
    weighted: float  # S1-S3 part only, comparable across modes
    objective: float  # what the annealer minimized
    s4_min_ratio: float
    unmodified: float
    heuristic: float
    complete: float


@dataclass
class InstanceResult:
    scenario: str
    index: int
    modes: Dict[str, ModeResult] = field(default_factory=dict)
    excluded: Optional[str] = None


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    mode: str
    instances: int
    excluded: int
    s1: float
    s2: float
    s3: float
    weighted: float
    s4_min_ratio: float
    unmodified: float
    heuristic: float
    complete: float


@dataclass(frozen=True)
class _Task:
    label: str
    index: int
    scenario: Optional[ScenarioConfig]
    instance_path: Optional[str]
    anneal: AnnealParams
    repetitions: int
    sigma_factor: float
    master_seed: int
    out_dir: Optional[str]


def _fmt(x: float) -> str:
    return FLOAT_FORMAT.format(x)


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def run_log_csv(result: AnnealResult) -> str:
    return _csv_text(
        ["repetition", "iteration", "heat", "current", "best"],
        [(rep, it, _fmt(h), _fmt(c), _fmt(b)) for rep, it, h, c, b in result.log],
    )


def robustness_csv(report: RobustnessReport) -> str:
    return _csv_text(
        ["rep", "unmodified", "heuristic", "complete"],
        [(k, r.unmodified, r.heuristic, r.complete) for k, r in enumerate(report.rows)],
    )


def _run_task(task: _Task) -> InstanceResult:
    gen_seed, anneal_seed, disturb_seed = instance_streams(task.master_seed, task.label, task.index)
    result = InstanceResult(task.label, task.index)
    folder = Path(task.out_dir) / task.label / f"instance_{task.index:03d}" if task.out_dir else None

    if task.scenario is not None:
        instance, seed_assignment = generate_instance(task.scenario, gen_seed)
        if folder is not None:
            io.save_instance(instance, folder / "instance.json")
            io.save_timetable(seed_assignment.timetable, folder / "instance.seed.json")
    else:
        instance = io.load_instance(task.instance_path)

    seed_int = int(anneal_seed.generate_state(1)[0])
    for mode in MODES:
        params = replace(mode_params(task.anneal, mode), seed=seed_int)
        try:
            solved = anneal(instance, params)
        except HeuristicFailure as exc:
            log.warning("%s #%d excluded: %s", task.label, task.index, exc)
            result.modes.clear()
            result.excluded = str(exc)
            return result
        issues = check_hard(instance, solved.timetable)
        if issues:  # anneal already checks; kept as a guard for artifacts
            raise AssertionError(describe(issues))
        # same disturbance draws for both timetables of this instance
        report = evaluate(instance, solved.timetable, task.repetitions, task.sigma_factor, disturb_seed)
        pen = solved.penalties
        w = params.weights
        result.modes[mode] = ModeResult(
            s1=pen.s1,
            s2=pen.s2,
            s3=pen.s3,
            weighted=w.w1 * pen.s1 + w.w2 * pen.s2 + w.w3 * pen.s3,
            objective=pen.weighted,
            s4_min_ratio=pen.s4_min_ratio,
            unmodified=report.mean_unmodified,
            heuristic=report.mean_heuristic,
            complete=report.mean_complete,
        )
        if folder is not None:
            io.save_timetable(solved.timetable, folder / f"{mode}.json")
            _write_text(folder / f"{mode}_log.csv", run_log_csv(solved))
            _write_text(folder / f"{mode}_robustness.csv", robustness_csv(report))
    log.info("%s #%d done", task.label, task.index)
    return result


def _tasks(config: ExperimentConfig, out_dir: Optional[Path]) -> List[_Task]:
    common = dict(
        anneal=config.anneal,
        repetitions=config.disturbance_repetitions,
        sigma_factor=config.sigma_factor,
        master_seed=config.master_seed,
        out_dir=None if out_dir is None else str(out_dir),
    )
    tasks = []
    for label, sc in config.scenarios.items():
        for k in range(config.instances_per_scenario):
            tasks.append(_Task(label, k, sc, None, **common))
    if config.instance_dir is not None:
        files = sorted(
            p for p in Path(config.instance_dir).glob("*.json") if not p.name.endswith(".seed.json")
        )
        if not files:
            raise ConfigError(f"no instance files in {config.instance_dir}")
        for p in files:
            tasks.append(_Task(p.stem, 0, None, str(p), **common))
    return tasks


def summarize(results: Sequence[InstanceResult], labels: Sequence[str]) -> List[SummaryRow]:
    rows = []
    for label in labels:
        mine = [r for r in results if r.scenario == label]
        done = [r for r in mine if r.excluded is None]
        for mode in MODES:
            vals = [r.modes[mode] for r in done]

            def mean(attr: str) -> float:
                return fmean(getattr(v, attr) for v in vals) if vals else float("nan")

            rows.append(
                SummaryRow(
                    scenario=label,
                    mode=mode,
                    instances=len(done),
                    excluded=len(mine) - len(done),
                    s1=mean("s1"),
                    s2=mean("s2"),
                    s3=mean("s3"),
                    weighted=mean("weighted"),
                    s4_min_ratio=mean("s4_min_ratio"),
                    unmodified=mean("unmodified"),
                    heuristic=mean("heuristic"),
                    complete=mean("complete"),
                )
            )
    return rows


def instances_csv(results: Sequence[InstanceResult]) -> str:
    rows = []
    for r in results:
        if r.excluded is not None:
            rows.append([r.scenario, r.index, "excluded"] + [""] * 9)
            continue
        for mode in MODES:
            m = r.modes[mode]
            rows.append(
                [r.scenario, r.index, mode, m.s1, m.s2, m.s3]
                + [_fmt(x) for x in (m.weighted, m.objective, m.s4_min_ratio, m.unmodified, m.heuristic, m.complete)]
            )
    header = ["scenario", "instance", "mode", "s1", "s2", "s3", "weighted", "objective",
              "s4_min_ratio", "unmodified", "heuristic", "complete"]
    return _csv_text(header, rows)


OBJECTIVE_COLUMNS = ["scenario", "mode", "instances", "excluded", "s1", "s2", "s3", "weighted", "s4_min_ratio"]
DISTURBED_COLUMNS = ["scenario", "mode", "instances", "unmodified", "heuristic", "complete"]


def emit_reports(rows: Sequence[SummaryRow], out_dir: Union[str, Path]) -> List[Path]:
    """Write the two summary tables and the per-scenario weighted means for plotting."""
    if not rows:
        raise ValueError("emit_reports needs at least one summary row")
    out = Path(out_dir)
    objectives = _csv_text(
        OBJECTIVE_COLUMNS,
        [[r.scenario, r.mode, r.instances, r.excluded]
         + [_fmt(x) for x in (r.s1, r.s2, r.s3, r.weighted, r.s4_min_ratio)] for r in rows],
    )
    disturbed = _csv_text(
        DISTURBED_COLUMNS,
        [[r.scenario, r.mode, r.instances] + [_fmt(x) for x in (r.unmodified, r.heuristic, r.complete)] for r in rows],
    )
    by_label: Dict[str, Dict[str, float]] = {}
    for r in rows:
        by_label.setdefault(r.scenario, {})[r.mode] = r.weighted
    lines = ["# scenario nominal pcbett"]
    for label, means in by_label.items():
        lines.append(" ".join([label] + [_fmt(means.get(m, float("nan"))) for m in MODES]))
    paths = [out / "summary_objectives.csv", out / "summary_disturbed.csv", out / "weighted_means.dat"]
    for path, text in zip(paths, (objectives, disturbed, "\n".join(lines) + "\n")):
        _write_text(path, text)
    return paths


@dataclass
class ExperimentResult:
    rows: List[SummaryRow]
    instances: List[InstanceResult]


def run_experiment(config: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None) -> ExperimentResult:
    issues = config.problems()
    if issues:
        raise ConfigError("invalid experiment: " + "; ".join(issues))
    out = None if out_dir is None else Path(out_dir)
    tasks = _tasks(config, out)
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    order = {label: k for k, label in enumerate(dict.fromkeys(t.label for t in tasks))}
    results.sort(key=lambda r: (order[r.scenario], r.index))
    rows = summarize(results, list(order))
    if out is not None:
        _write_text(out / "config.json", json.dumps(config.to_dict(), indent=1, sort_keys=True) + "\n")
        _write_text(out / "instances.csv", instances_csv(results))
        emit_reports(rows, out)
    return ExperimentResult(rows, results)


def read_summary(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def pair_means(rows: Sequence[SummaryRow], attr: str) -> Tuple[float, float]:
    """(nominal, pcbett) instance-weighted means of ``attr`` across all scenarios."""
    out = []
    for mode in MODES:
        picked = [(r.instances, getattr(r, attr)) for r in rows if r.mode == mode and r.instances]
        total = sum(n for n, _ in picked)
        out.append(sum(n * v for n, v in picked) / total if total else float("nan"))
    return out[0], out[1]
