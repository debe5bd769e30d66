"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

Criteria 5-7 share a single desk-scale batch (5 scenario-1 instances, 20
disturbances each), run once per session.
"""

import csv
import itertools
import random
import time
from fractions import Fraction
from pathlib import Path
from statistics import fmean, pvariance

import numpy as np
import pytest

from conftest import ACCEPTANCE
from oracles import brute_slot_grid
from robust_ettp import cli
from robust_ettp.annealer import AnnealParams, HeuristicFailure, anneal
from robust_ettp.generator import SCENARIOS, generate_instance, resolve_scenario, sample_beta, sample_capacity
from robust_ettp.harness import MODES, ExperimentConfig, pair_means, run_experiment
from robust_ettp.model import (
    Instance,
    Move,
    Timetable,
    Weights,
    apply_move,
    check_hard,
    conflict_delta,
    objective_delta,
    soft_penalties,
    validate_instance,
)
from robust_ettp.robustness import disturb
from robust_ettp.room_assign import SlotProblem, find_feasible, find_pcbett_optimal


def verdict(number, title, ok, detail):
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    ACCEPTANCE[(number, title)] = line
    print(line)
    assert ok, line


# 1 ---------------------------------------------------------------------------


def test_criterion_1_room_oracle_grid():
    values = range(1, 7)
    started = time.perf_counter()
    reference = {}
    checked = mismatches = 0
    for R in range(1, 5):
        for caps in itertools.product(values, repeat=R):
            rooms = tuple(enumerate(caps))
            key_caps = tuple(sorted(caps))
            for n in range(1, 4):
                rows = list(itertools.product(values, repeat=n))
                key = (key_caps, n)
                if key not in reference:
                    # the enumerator's answer does not depend on room order
                    reference[key] = brute_slot_grid(key_caps, rows, max_den=6)
                for demands, (ok, best) in zip(rows, reference[key]):
                    problem = SlotProblem(tuple(enumerate(demands)), rooms)
                    feas = find_feasible(problem)
                    opt = find_pcbett_optimal(problem)
                    checked += 1
                    if (feas is not None) != ok or (opt is not None) != ok:
                        mismatches += 1
                    elif ok:
                        got = min(Fraction(sum(caps[r] for r in opt[e]), d) for e, d in enumerate(demands))
                        mismatches += got != best
    elapsed = time.perf_counter() - started
    verdict(
        1, "room assignment matches exhaustive enumeration",
        mismatches == 0 and elapsed < 60,
        f"{checked} problems, {mismatches} mismatches, {elapsed:.1f}s",
    )


# 2 ---------------------------------------------------------------------------


def random_pair(rng):
    n = rng.randint(2, 10)
    T = rng.randint(2, 9)
    spd = rng.randint(1, T)
    conflicts = {(i, j): rng.randint(1, 6) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.35}
    students = tuple(rng.randint(1, 9) for _ in range(n))
    inst = Instance(tuple(rng.randint(5, 20) for _ in range(n)), students, conflicts, timeslot_count=T, slots_per_day=spd)
    slots = tuple(rng.randrange(T) for _ in range(n))
    tt = Timetable(slots, tuple(frozenset({e}) for e in range(n)))  # exam e owns room e
    return inst, tt


def test_criterion_2_incremental_objective():
    rng = random.Random(2024)
    bad = 0
    for _ in range(1000):
        inst, tt = random_pair(rng)
        weights = Weights(period_spread=rng.randint(1, 6))
        t1, t2 = rng.sample(range(inst.timeslot_count), 2)
        members = tt.slot_members(inst.timeslot_count)
        from_t1 = frozenset(e for e in members[t1] if rng.random() < 0.6)
        from_t2 = frozenset(e for e in members[t2] if rng.random() < 0.6)
        move = Move(t1, t2, from_t1, from_t2)
        after = apply_move(tt, move)
        before_p, after_p = soft_penalties(inst, tt, weights), soft_penalties(inst, after, weights)
        d = conflict_delta(inst, tt.timeslots, move.new_slots(), weights.period_spread)
        full = (after_p.s1 - before_p.s1, after_p.s2 - before_p.s2, after_p.s3 - before_p.s3)
        bad += d != full
        bad += objective_delta(inst, tt, move, weights) != after_p.weighted - before_p.weighted
    verdict(2, "incremental delta equals full re-evaluation", bad == 0, f"1000 pairs, {bad} mismatches")


# 3 ---------------------------------------------------------------------------


def test_criterion_3_generator_invariants():
    problems = []
    counts = []
    for name in SCENARIOS:
        for suppress in (False, True):
            config = resolve_scenario(name, suppress)
            for seed in range(100):
                inst, sa = generate_instance(config, seed)
                if validate_instance(inst):
                    problems.append((name, seed, "instance"))
                allowed = set() if suppress else {"H3"}
                if {v.kind for v in check_hard(inst, sa.timetable)} - allowed:
                    problems.append((name, seed, "seed assignment"))
                if name == "scenario1" and not suppress:
                    counts.append(len(inst.conflicts))
    mean = fmean(counts)
    ok = not problems and abs(mean - 714) <= 0.05 * 714
    verdict(3, "generator invariants and scenario-1 conflict count", ok,
            f"{len(problems)} invariant failures, mean conflicts {mean:.1f} vs 714")


# 4 ---------------------------------------------------------------------------


def scenario1_instance(seed=0):
    while True:
        inst, _ = generate_instance(SCENARIOS["scenario1"], seed)
        try:
            anneal(inst, AnnealParams(iterations=1, cooling_limit=1, repetitions=1))
            return inst
        except HeuristicFailure:
            seed += 1


@pytest.mark.parametrize("pcbett", [False, True])
def test_criterion_4_feasibility_preserved(pcbett):
    inst = scenario1_instance()
    failures = []

    def check(rep, state):
        if check_hard(inst, state.timetable()):
            failures.append(state.iteration)

    params = AnnealParams(iterations=10_000, cooling_limit=1_000, repetitions=1, pcbett=pcbett)
    anneal(inst, params, callback=check)
    mode = "pcbett" if pcbett else "nominal"
    verdict(4, f"every annealing iterate feasible ({mode})", not failures,
            f"10000 iterations, {len(failures)} infeasible states")


# 5-7 -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_batch(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_batch")
    config = ExperimentConfig.from_profile("desk")  # 5 scenario-1 instances, 20 disturbances
    result = run_experiment(config, out)
    reps = {mode: [] for mode in MODES}
    for path in sorted(Path(out).glob("scenario1/instance_*/")):
        for mode in MODES:
            with open(path / f"{mode}_robustness.csv", newline="") as fh:
                reps[mode] += [(int(r["unmodified"]), int(r["heuristic"]), int(r["complete"])) for r in csv.DictReader(fh)]
    return result, reps


def test_criterion_5_recovery_ordering(desk_batch):
    result, reps = desk_batch
    violations = sum(1 for mode in MODES for u, h, c in reps[mode] if not (c <= h <= u))
    strict = True
    parts = []
    for mode in MODES:
        u, h, c = (fmean(x[k] for x in reps[mode]) for k in range(3))
        parts.append(f"{mode} {u:.2f}/{h:.2f}/{c:.2f}")
        if u > 0 and not (u > h > c):
            strict = False
    n = sum(len(v) for v in reps.values())
    verdict(5, "complete <= heuristic <= unmodified", violations == 0 and strict and n == 2 * 5 * 20,
            f"{n} repetitions, {violations} violations; means {', '.join(parts)}")


def test_criterion_6_pcbett_robustness(desk_batch):
    result, _ = desk_batch
    s4_nom, s4_pc = pair_means(result.rows, "s4_min_ratio")
    un_nom, un_pc = pair_means(result.rows, "unmodified")
    ok = s4_pc > s4_nom and s4_nom < 1.10 and s4_pc > 1.20 and un_pc < 0.5 * un_nom
    verdict(6, "PCBETT raises min ratio and cuts disturbed slots", ok,
            f"s4 nominal {s4_nom:.4f} pcbett {s4_pc:.4f}; disturbed nominal {un_nom:.3f} pcbett {un_pc:.3f}")


def test_criterion_7_objective_tradeoff(desk_batch):
    result, _ = desk_batch
    w_nom, w_pc = pair_means(result.rows, "weighted")
    verdict(7, "PCBETT weighted S1-S3 >= nominal", w_pc >= w_nom, f"nominal {w_nom:.2f}, pcbett {w_pc:.2f}")


# 8 ---------------------------------------------------------------------------


def test_criterion_8_byte_identical_reruns(tmp_path, capsys):
    config = tmp_path / "exp.yaml"
    config.write_text(
        "profile: desk\n"
        "instances_per_scenario: 2\n"
        "disturbance_repetitions: 10\n"
        "scenarios: [scenario1, scenario3]\n"
        "anneal: {iterations: 1500, cooling_limit: 500, repetitions: 2}\n"
    )
    codes = [cli.main(["experiment", "--config", str(config), "--out", str(tmp_path / name), "--seed", "11"]) for name in "ab"]
    capsys.readouterr()
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    differing = [p for p in files_a if (tmp_path / "a" / p).read_bytes() != (tmp_path / "b" / p).read_bytes()]
    ok = codes == [0, 0] and files_a == files_b and not differing and len(files_a) > 5
    verdict(8, "experiment reruns are byte-identical", ok, f"{len(files_a)} files, {len(differing)} differ")


# 9 ---------------------------------------------------------------------------


def test_criterion_9_distributions():
    rng = np.random.default_rng(99)
    caps = [sample_capacity(rng) for _ in range(100_000)]
    cap_mean, cap_var = fmean(caps), pvariance(caps)
    beta_mean = fmean(sample_beta(10, 5, rng) for _ in range(100_000))
    inst = Instance((1,), (100,) * 100_000, {}, timeslot_count=1, slots_per_day=1)
    draws = np.asarray(disturb(inst, 0.2, rng).new_students)
    std = float(draws.std())
    ok = 95 <= cap_mean <= 105 and abs(cap_var - 500) <= 50 and 0.66 <= beta_mean <= 0.68 and 19 <= std <= 21
    verdict(9, "sampling distributions", ok,
            f"capacity mean {cap_mean:.2f} var {cap_var:.1f}; Beta(10,5) mean {beta_mean:.4f}; disturb std {std:.3f}")
