"""Seeded random instance generation.

Room sizes are negative-binomial, exams are partitioned over the timeslots,
each slot's rooms are dealt out to its exams, student counts are a Beta
fraction of the dealt capacity, and conflicts are Bernoulli per exam pair.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .model import Instance, Timetable


@dataclass(frozen=True)
class ScenarioConfig:
    exam_count: int
    room_count: int
    timeslot_count: int
    slots_per_day: int = 3
    capacity_nb: Tuple[float, int] = (0.2, 25)  # (success probability, successes)
    load_beta: Tuple[float, float] = (10.0, 5.0)
    conflict_mode: str = "uniform"  # "uniform" | "poisson_binomial"
    conflict_p: float = 0.1
    conflict_beta: Tuple[float, float] = (4.0, 6.0)
    suppress_seed_conflicts: bool = False
    partition_method: str = "uniform"  # "uniform" | "window"

    def problems(self) -> List[str]:
        out = []
        E, R, T = self.exam_count, self.room_count, self.timeslot_count
        if min(E, R, T, self.slots_per_day) < 1:
            out.append("exam_count, room_count, timeslot_count and slots_per_day must be >= 1")
        elif not (T <= E <= T * R):
            out.append(f"need T <= E <= T*R, got E={E}, T={T}, R={R}")
        if self.slots_per_day > T:
            out.append("slots_per_day exceeds timeslot_count")
        p, k = self.capacity_nb
        if not (0 < p <= 1) or k <= 0:
            out.append(f"capacity_nb {self.capacity_nb} needs 0 < p <= 1 and k > 0")
        if min(self.load_beta) <= 0 or min(self.conflict_beta) <= 0:
            out.append("beta parameters must be positive")
        if self.conflict_mode not in ("uniform", "poisson_binomial"):
            out.append(f"unknown conflict_mode {self.conflict_mode!r}")
        if self.partition_method not in ("uniform", "window"):
            out.append(f"unknown partition_method {self.partition_method!r}")
        if not (0 <= self.conflict_p <= 1):
            out.append("conflict_p must lie in [0, 1]")
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        for key in ("capacity_nb", "load_beta", "conflict_beta"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


_BASE = ScenarioConfig(exam_count=120, room_count=8, timeslot_count=30)

SCENARIOS: Dict[str, ScenarioConfig] = {
    "scenario1": replace(_BASE, conflict_mode="uniform", conflict_p=0.1),
    "scenario2": replace(_BASE, conflict_mode="uniform", conflict_p=0.25),
    "scenario3": replace(_BASE, exam_count=90, conflict_mode="poisson_binomial"),
    "scenario4": replace(_BASE, conflict_mode="poisson_binomial"),
    "scenario5": replace(_BASE, exam_count=150, conflict_mode="poisson_binomial"),
}


@dataclass(frozen=True)
class SeedAssignment:
    """The feasible-without-conflicts timetable the instance was built around."""

    parts: Tuple[Tuple[int, ...], ...]  # exams per timeslot
    timetable: Timetable


def sample_capacity(rng: np.random.Generator, p: float = 0.2, k: int = 25) -> int:
    """Failures before the k-th success at success probability p, at least 1."""
    return max(1, int(rng.negative_binomial(k, p)))


def sample_beta(a: float, b: float, rng: np.random.Generator) -> float:
    if a <= 0 or b <= 0:
        raise ValueError("beta parameters must be positive")
    return float(rng.beta(a, b))


def _partition_weights(E: int, T: int, R: int) -> List[List[float]]:
    """weights[i][m]: sum over size tuples for parts i..T-1 totalling m of prod 1/size!."""
    inv_fact = [1.0 / math.factorial(s) for s in range(R + 1)]
    weights = [[0.0] * (E + 1) for _ in range(T + 1)]
    weights[T][0] = 1.0
    for i in range(T - 1, -1, -1):
        nxt, row = weights[i + 1], weights[i]
        for m in range(E + 1):
            row[m] = sum(nxt[m - s] * inv_fact[s] for s in range(1, min(R, m) + 1))
    return weights


def sample_partition(E: int, T: int, R: int, rng: np.random.Generator, method: str = "uniform") -> List[int]:
    """T part sizes in [1, R] summing to E, drawn slot by slot inside the feasible window.

    ``method="uniform"`` weights each size so that, after shuffling the exams
    into the parts, every labeled partition of the exams is equally likely.
    ``method="window"`` draws each size uniformly from its window instead.
    """
    if not (1 <= T <= E <= T * R):
        raise ValueError(f"no partition of {E} exams into {T} parts of size 1..{R}")
    if method not in ("uniform", "window"):
        raise ValueError(f"unknown partition method {method!r}")
    weights = _partition_weights(E, T, R) if method == "uniform" else None
    sizes = []
    remaining = E
    for i in range(T):
        later = T - i - 1
        lo = max(1, remaining - later * R)
        hi = min(R, remaining - later)
        if weights is None or lo == hi:
            size = int(rng.integers(lo, hi + 1))
        else:
            w = np.array([weights[i + 1][remaining - s] / math.factorial(s) for s in range(lo, hi + 1)])
            size = lo + int(rng.choice(hi - lo + 1, p=w / w.sum()))
        sizes.append(size)
        remaining -= size
    return sizes


def generate_instance(config: ScenarioConfig, seed) -> Tuple[Instance, SeedAssignment]:
    issues = config.problems()
    if issues:
        raise ValueError("invalid scenario: " + "; ".join(issues))
    rng = np.random.default_rng(seed)
    E, R, T = config.exam_count, config.room_count, config.timeslot_count
    p_nb, k_nb = config.capacity_nb
    caps = [sample_capacity(rng, p_nb, k_nb) for _ in range(R)]

    sizes = sample_partition(E, T, R, rng, config.partition_method)
    exams = rng.permutation(E)
    parts: List[Tuple[int, ...]] = []
    start = 0
    for size in sizes:
        parts.append(tuple(sorted(int(e) for e in exams[start:start + size])))
        start += size

    slot_of = [0] * E
    patterns: List[frozenset] = [frozenset()] * E
    students = [0] * E
    a, b = config.load_beta
    for t, part in enumerate(parts):
        rooms = [int(r) for r in rng.permutation(R)]
        owned: List[List[int]] = [[r] for r in rooms[: len(part)]]
        for r in rooms[len(part):]:
            owned[int(rng.integers(len(part)))].append(r)
        for e, own in zip(part, owned):
            slot_of[e] = t
            patterns[e] = frozenset(own)
            cap = sum(caps[r] for r in own)
            n = sample_beta(a, b, rng)
            students[e] = min(cap, 1 + int(np.floor(cap * n)))

    iu, ju = np.triu_indices(E, k=1)
    if config.conflict_mode == "uniform":
        prob = np.full(iu.shape, config.conflict_p)
    else:
        pe = rng.beta(*config.conflict_beta, size=E)
        prob = pe[iu] * pe[ju]
    hit = rng.random(iu.shape[0]) < prob
    if config.suppress_seed_conflicts:
        seed_slots = np.asarray(slot_of)
        hit &= seed_slots[iu] != seed_slots[ju]
    conflicts = {(int(i), int(j)): 1 for i, j in zip(iu[hit], ju[hit])}

    instance = Instance(
        room_capacities=tuple(caps),
        students=tuple(students),
        conflicts=conflicts,
        timeslot_count=T,
        slots_per_day=config.slots_per_day,
    )
    return instance, SeedAssignment(tuple(parts), Timetable(tuple(slot_of), tuple(patterns)))


def resolve_scenario(name_or_config, suppress_seed_conflicts: Optional[bool] = None) -> ScenarioConfig:
    if isinstance(name_or_config, ScenarioConfig):
        config = name_or_config
    elif isinstance(name_or_config, dict):
        config = ScenarioConfig.from_dict(name_or_config)
    else:
        try:
            config = SCENARIOS[name_or_config]
        except KeyError:
            raise ValueError(f"unknown scenario {name_or_config!r}; presets: {', '.join(SCENARIOS)}") from None
    if suppress_seed_conflicts is not None:
        config = replace(config, suppress_seed_conflicts=suppress_seed_conflicts)
    return config
