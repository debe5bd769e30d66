"""Student-count disturbances and slot-local recovery of room assignments."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from statistics import fmean
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .model import Instance, Timetable
from .room_assign import (
    DEFAULT_NODE_BUDGET,
    Assignment,
    SearchBudgetExceeded,
    SlotProblem,
    find_feasible,
    minimal_reduction,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Disturbance:
    new_students: Tuple[int, ...]
    sigma_factor: float = 0.2


def disturb(instance: Instance, sigma_factor: float, rng: np.random.Generator) -> Disturbance:
    """Draw N(nu, sigma_factor * nu) per exam, rounded to the nearest integer and clamped to >= 1."""
    if sigma_factor < 0:
        raise ValueError("sigma_factor must be nonnegative")
    nu = np.asarray(instance.students, dtype=float)
    draws = rng.normal(nu, sigma_factor * nu)
    new = np.maximum(np.rint(draws), 1).astype(int)
    return Disturbance(tuple(int(x) for x in new), sigma_factor)


def disturbed_slots(instance: Instance, disturbance: Disturbance, tt: Timetable) -> List[int]:
    caps = instance.room_capacities
    bad = set()
    for e, (t, pattern) in enumerate(zip(tt.timeslots, tt.rooms)):
        if sum(caps[r] for r in pattern) < disturbance.new_students[e]:
            bad.add(t)
    return sorted(bad)


def count_disturbed(instance: Instance, disturbance: Disturbance, tt: Timetable) -> int:
    return len(disturbed_slots(instance, disturbance, tt))


def _slot_rooms(capacities: Sequence[int], rooms: Optional[Sequence[int]]):
    ids = range(len(capacities)) if rooms is None else rooms
    return tuple((r, capacities[r]) for r in ids)


def heuristic_recovery(
    patterns: Mapping[int, FrozenSet[int]],
    demands: Mapping[int, int],
    capacities: Sequence[int],
    rooms: Optional[Sequence[int]] = None,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> Optional[Assignment]:
    """Repair one slot by only shrinking sufficient exams and only growing deficient ones.

    Sufficient exams keep a minimal subset of their rooms. Deficient exams keep
    all their rooms and draw extra ones from the freed and unused rooms.
    Returns the new patterns, or None if the slot stays disturbed.
    """
    deficient = [e for e, p in patterns.items() if sum(capacities[r] for r in p) < demands[e]]
    if not deficient:
        return {e: frozenset(p) for e, p in patterns.items()}
    locked = {}
    for e, p in patterns.items():
        if e in deficient:
            locked[e] = frozenset(p)
        else:
            locked[e] = minimal_reduction(p, capacities, demands[e])
    problem = SlotProblem(
        exams=tuple((e, demands[e]) for e in sorted(patterns)),
        rooms=_slot_rooms(capacities, rooms),
        locked=locked,
    )
    return find_feasible(problem, node_budget)


def complete_recovery(
    demands: Mapping[int, int],
    capacities: Sequence[int],
    rooms: Optional[Sequence[int]] = None,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> Optional[Assignment]:
    """Reassign every room of the slot from scratch; None means no assignment exists."""
    problem = SlotProblem(
        exams=tuple((e, demands[e]) for e in sorted(demands)),
        rooms=_slot_rooms(capacities, rooms),
    )
    return find_feasible(problem, node_budget)


def recover(
    instance: Instance,
    tt: Timetable,
    disturbance: Disturbance,
    strategy: str = "complete",
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> Tuple[Timetable, List[int]]:
    """Apply a recovery strategy to every disturbed slot.

    Returns the repaired timetable (timeslots untouched) and the slots that
    could not be repaired.
    """
    if strategy not in ("heuristic", "complete"):
        raise ValueError(f"unknown recovery strategy {strategy!r}")
    members = tt.slot_members(instance.timeslot_count)
    nu_new = disturbance.new_students
    new_patterns: Dict[int, FrozenSet[int]] = {}
    failed = []
    for t in disturbed_slots(instance, disturbance, tt):
        demands = {e: nu_new[e] for e in members[t]}
        try:
            if strategy == "heuristic":
                found = heuristic_recovery(
                    {e: tt.rooms[e] for e in members[t]}, demands, instance.room_capacities, node_budget=node_budget
                )
            else:
                found = complete_recovery(demands, instance.room_capacities, node_budget=node_budget)
        except SearchBudgetExceeded:
            log.warning("slot %d: recovery search budget exceeded, counting as failure", t)
            found = None
        if found is None:
            failed.append(t)
        else:
            new_patterns.update(found)
    return tt.with_rooms(new_patterns), failed


@dataclass(frozen=True)
class RepetitionCounts:
    unmodified: int
    heuristic: int
    complete: int


@dataclass
class RobustnessReport:
    rows: List[RepetitionCounts] = field(default_factory=list)

    def _mean(self, attr: str) -> Optional[float]:
        if not self.rows:
            return None
        return fmean(getattr(r, attr) for r in self.rows)

    @property
    def mean_unmodified(self) -> Optional[float]:
        return self._mean("unmodified")

    @property
    def mean_heuristic(self) -> Optional[float]:
        return self._mean("heuristic")

    @property
    def mean_complete(self) -> Optional[float]:
        return self._mean("complete")


def evaluate(
    instance: Instance,
    tt: Timetable,
    repetitions: int,
    sigma_factor: float = 0.2,
    seed=0,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> RobustnessReport:
    """Disturb the student counts ``repetitions`` times and count disturbed slots.

    Both recovery strategies start from the original timetable of each
    repetition. ``seed`` may be an int or a numpy SeedSequence; repetition k
    always sees the same disturbance for the same seed, so different
    timetables of one instance can be compared on common draws.
    """
    if isinstance(seed, np.random.SeedSequence):
        # fresh copy: spawn() on the caller's object would shift its children
        ss = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    else:
        ss = np.random.SeedSequence(seed)
    report = RobustnessReport()
    for child in ss.spawn(repetitions):
        dist = disturb(instance, sigma_factor, np.random.default_rng(child))
        unmodified = count_disturbed(instance, dist, tt)
        if unmodified:
            _, heur_failed = recover(instance, tt, dist, "heuristic", node_budget)
            _, comp_failed = recover(instance, tt, dist, "complete", node_budget)
        else:
            heur_failed = comp_failed = []
        report.rows.append(RepetitionCounts(unmodified, len(heur_failed), len(comp_failed)))
    return report
