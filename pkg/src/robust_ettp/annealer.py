"""Simulated annealing over Kempe-chain moves with exact per-slot room assignment.

Every visited state is feasible: a move is only considered when both touched
timeslots admit a room assignment. The heat level is reset to ``heat_max``
every ``cooling_limit`` iterations, and cools twice as fast on iterations
that accept an improving move.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .model import (
    Instance,
    PenaltyBreakdown,
    Timetable,
    Weights,
    check_hard,
    conflict_counts,
    conflict_delta,
    describe,
    soft_penalties,
    weighted_value,
)
from .room_assign import (
    DEFAULT_NODE_BUDGET,
    SearchBudgetExceeded,
    SlotProblem,
    find_feasible,
    find_pcbett_optimal,
)

log = logging.getLogger(__name__)


class HeuristicFailure(RuntimeError):
    """The greedy construction could not place some exam."""


@dataclass
class AnnealParams:
    heat_max: float = 100.0
    heat_min: float = 1.0
    cooling_limit: int = 5000
    iterations: int = 50000
    repetitions: int = 8
    cooling_rate: Optional[float] = None  # default spans one cycle from heat_max to heat_min
    delta_scale: Optional[float] = None  # default: cheapest positive weight / heat_max
    pcbett: bool = False
    weights: Weights = field(default_factory=Weights)
    seed: int = 0
    node_budget: int = DEFAULT_NODE_BUDGET
    log_every: int = 100
    heuristic_attempts: int = 5

    @property
    def alpha(self) -> float:
        if self.cooling_rate is not None:
            return self.cooling_rate
        return (self.heat_min / self.heat_max) ** (1.0 / self.cooling_limit)

    def problems(self) -> List[str]:
        out = []
        if self.heat_min < 1 or self.heat_max < self.heat_min:
            out.append("need 1 <= heat_min <= heat_max")
        if not (0 < self.alpha < 1):
            out.append("cooling rate must lie in (0, 1)")
        if self.cooling_limit < 1 or self.iterations < self.cooling_limit:
            out.append("need 1 <= cooling_limit <= iterations")
        if self.repetitions < 1:
            out.append("repetitions must be >= 1")
        if self.delta_scale is not None and self.delta_scale <= 0:
            out.append("delta_scale must be positive")
        return out


def default_delta_scale(params: AnnealParams) -> float:
    """At heat_max the cheapest single violation is accepted with probability 1/e."""
    w = params.weights
    positive = [x for x in (w.w1, w.w2, w.w3) if x > 0]
    return (min(positive) if positive else 1.0) / params.heat_max


def _greedy_rooms(free: Sequence[int], caps: Sequence[int], need: int) -> Optional[List[int]]:
    picked, total = [], 0
    for r in free:
        picked.append(r)
        total += caps[r]
        if total >= need:
            return picked
    return None


def initial_heuristic(instance: Instance, order: Optional[Sequence[int]] = None) -> Timetable:
    """Largest exams first, each into the first slot with no conflict and enough free rooms."""
    caps = instance.room_capacities
    nu = instance.students
    if order is None:
        order = sorted(range(instance.exam_count), key=lambda e: (-nu[e], e))
    T = instance.timeslot_count
    room_order = sorted(range(instance.room_count), key=lambda r: (-caps[r], r))
    free = [list(room_order) for _ in range(T)]
    members: List[set] = [set() for _ in range(T)]
    adj = [{f for f, _ in nb} for nb in instance.neighbors]
    slot_of = [-1] * instance.exam_count
    patterns: List[FrozenSet[int]] = [frozenset()] * instance.exam_count
    for e in order:
        for t in range(T):
            if adj[e] & members[t]:
                continue
            picked = _greedy_rooms(free[t], caps, nu[e])
            if picked is None:
                continue
            members[t].add(e)
            slot_of[e] = t
            patterns[e] = frozenset(picked)
            free[t] = [r for r in free[t] if r not in patterns[e]]
            break
        else:
            raise HeuristicFailure(f"exam {e} ({nu[e]} students) fits no timeslot")
    return Timetable(tuple(slot_of), tuple(patterns))


def seed_timetable(instance: Instance, attempts: int = 5, seed: int = 0) -> Timetable:
    """initial_heuristic, retried with equal-size exams shuffled among themselves."""
    nu = instance.students
    rng = random.Random(seed)
    last: Optional[HeuristicFailure] = None
    for attempt in range(max(1, attempts)):
        if attempt == 0:
            order = None
        else:
            keys = {e: rng.random() for e in range(instance.exam_count)}
            order = sorted(range(instance.exam_count), key=lambda e: (-nu[e], keys[e]))
        try:
            return initial_heuristic(instance, order)
        except HeuristicFailure as exc:
            last = exc
    assert last is not None
    raise last


def kempe_chain(timeslots: Sequence[int], instance: Instance, e: int, t2: int) -> Tuple[FrozenSet[int], FrozenSet[int]]:
    """Component of ``e`` in the conflict graph between slots t(e) and ``t2``.

    Returns (exams leaving t(e), exams leaving t2).
    """
    t1 = timeslots[e]
    if t1 == t2:
        raise ValueError("target slot equals the exam's slot")
    adj = instance.neighbors
    side_a, side_b = {e}, set()
    stack = [e]
    while stack:
        x = stack.pop()
        tx = timeslots[x]
        other = t2 if tx == t1 else t1
        for f, _ in adj[x]:
            if timeslots[f] != other:
                continue
            bucket = side_b if other == t2 else side_a
            if f not in bucket:
                bucket.add(f)
                stack.append(f)
    return frozenset(side_a), frozenset(side_b)


_INFEASIBLE = object()


class SlotSolver:
    """Memoized slot room assignment for one instance.

    All timeslots share the same rooms, so a slot's answer depends only on
    the multiset of its exams' demands.
    """

    def __init__(self, instance: Instance, pcbett: bool, node_budget: int = DEFAULT_NODE_BUDGET):
        self.students = instance.students
        self.caps = instance.room_capacities
        self.rooms = tuple(enumerate(instance.room_capacities))
        self.solve_fn = find_pcbett_optimal if pcbett else find_feasible
        self.node_budget = node_budget
        self.cache: Dict[tuple, object] = {}
        self.calls = 0
        self.misses = 0
        self.budget_exceeded = 0

    def solve(self, exams) -> Optional[Tuple[Dict[int, FrozenSet[int]], float]]:
        """Room patterns for ``exams`` plus the slot's max students/capacity, or None."""
        self.calls += 1
        nu = self.students
        ordered = sorted(exams, key=lambda e: (-nu[e], e))
        if len(ordered) > len(self.rooms):
            return None
        key = tuple(nu[e] for e in ordered)
        hit = self.cache.get(key)
        if hit is None:
            self.misses += 1
            problem = SlotProblem(exams=tuple(enumerate(key)), rooms=self.rooms)
            try:
                found = self.solve_fn(problem, self.node_budget)
            except SearchBudgetExceeded:
                self.budget_exceeded += 1
                found = None
            if found is None:
                hit = _INFEASIBLE
            else:
                pats = tuple(found[i] for i in range(len(key)))
                load = max((d / sum(self.caps[r] for r in p) for d, p in zip(key, pats)), default=0.0)
                hit = (pats, load)
            self.cache[key] = hit
        if hit is _INFEASIBLE:
            return None
        pats, load = hit
        return dict(zip(ordered, pats)), load


@dataclass
class SolverState:
    slot_of: List[int]
    patterns: List[FrozenSet[int]]
    members: List[set]
    counts: List[int]  # s1, s2, s3
    slot_load: List[float]
    value: float
    heat: float
    iteration: int = 0
    best_value: float = math.inf
    best_slot_of: List[int] = field(default_factory=list)
    best_patterns: List[FrozenSet[int]] = field(default_factory=list)

    def timetable(self) -> Timetable:
        return Timetable(tuple(self.slot_of), tuple(self.patterns))

    def best_timetable(self) -> Timetable:
        return Timetable(tuple(self.best_slot_of), tuple(self.best_patterns))

    def remember_if_best(self):
        if self.value < self.best_value:
            self.best_value = self.value
            self.best_slot_of = list(self.slot_of)
            self.best_patterns = list(self.patterns)


@dataclass
class AnnealResult:
    timetable: Timetable
    penalties: PenaltyBreakdown
    initial: Timetable
    initial_penalties: PenaltyBreakdown
    best_repetition: int
    log: List[Tuple[int, int, float, float, float]]
    stats: Dict[str, int]


class Annealer:
    def __init__(self, instance: Instance, params: AnnealParams):
        issues = params.problems()
        if issues:
            raise ValueError("invalid anneal parameters: " + "; ".join(issues))
        self.instance = instance
        self.params = params
        self.weights = params.weights
        self.alpha = params.alpha
        self.solver = SlotSolver(instance, params.pcbett, params.node_budget)
        self.delta_scale = params.delta_scale or default_delta_scale(params)
        self.stats = {"accepted": 0, "improving": 0, "rejected_rooms": 0, "rejected_metropolis": 0}

    def value_of(self, counts: Sequence[int], slot_load: Sequence[float]) -> float:
        load = max(slot_load) if self.params.pcbett else 0.0
        return weighted_value(self.weights, *counts, load_ratio=load, pcbett_mode=self.params.pcbett)

    def start_state(self, tt: Timetable) -> SolverState:
        inst = self.instance
        T = inst.timeslot_count
        members = [set(m) for m in tt.slot_members(T)]
        caps = inst.room_capacities
        slot_load = [0.0] * T
        for e, t in enumerate(tt.timeslots):
            load = inst.students[e] / sum(caps[r] for r in tt.rooms[e])
            slot_load[t] = max(slot_load[t], load)
        counts = list(conflict_counts(inst, tt.timeslots, self.weights.period_spread))
        state = SolverState(
            slot_of=list(tt.timeslots),
            patterns=list(tt.rooms),
            members=members,
            counts=counts,
            slot_load=slot_load,
            value=self.value_of(counts, slot_load),
            heat=self.params.heat_max,
        )
        state.remember_if_best()
        return state

    def acceptance_probability(self, delta: float, heat: float) -> float:
        if delta <= 0:
            return 1.0
        return math.exp(-delta / (self.delta_scale * heat))

    def propose_and_accept(self, state: SolverState, rng: random.Random) -> bool:
        """One annealing iteration; returns whether a move was accepted."""
        inst = self.instance
        p = self.params
        T = inst.timeslot_count
        accepted = improving = False
        if T > 1:
            e = rng.randrange(inst.exam_count)
            t1 = state.slot_of[e]
            t2 = rng.randrange(T - 1)
            if t2 >= t1:
                t2 += 1
            from_t1, from_t2 = kempe_chain(state.slot_of, inst, e, t2)
            new1 = (state.members[t1] - from_t1) | from_t2
            new2 = (state.members[t2] - from_t2) | from_t1
            sol1 = self.solver.solve(new1)
            sol2 = self.solver.solve(new2) if sol1 is not None else None
            if sol1 is None or sol2 is None:
                self.stats["rejected_rooms"] += 1
            else:
                moved = {x: t2 for x in from_t1}
                moved.update({x: t1 for x in from_t2})
                d = conflict_delta(inst, state.slot_of, moved, self.weights.period_spread)
                counts = [c + dc for c, dc in zip(state.counts, d)]
                old1, old2 = state.slot_load[t1], state.slot_load[t2]
                state.slot_load[t1], state.slot_load[t2] = sol1[1], sol2[1]
                value = self.value_of(counts, state.slot_load)
                delta = value - state.value
                if delta <= 0 or rng.random() < self.acceptance_probability(delta, state.heat):
                    accepted = True
                    improving = delta < 0
                    for x, t in moved.items():
                        state.slot_of[x] = t
                    state.members[t1], state.members[t2] = new1, new2
                    for pats, _ in (sol1, sol2):
                        for x, pat in pats.items():
                            state.patterns[x] = pat
                    state.counts = counts
                    state.value = value
                    state.remember_if_best()
                    self.stats["accepted"] += 1
                    self.stats["improving"] += improving
                else:
                    state.slot_load[t1], state.slot_load[t2] = old1, old2
                    self.stats["rejected_metropolis"] += 1
        state.heat *= self.alpha * self.alpha if improving else self.alpha
        state.iteration += 1
        if state.iteration % p.cooling_limit == 0:
            state.heat = p.heat_max
        state.heat = max(state.heat, p.heat_min)
        return accepted

    def run(
        self,
        start: Timetable,
        rng: random.Random,
        iterations: int,
        rep: int = 0,
        callback: Optional[Callable[[int, SolverState], None]] = None,
        log_rows: Optional[list] = None,
    ) -> SolverState:
        state = self.start_state(start)
        every = self.params.log_every
        for _ in range(iterations):
            self.propose_and_accept(state, rng)
            if callback is not None:
                callback(rep, state)
            if log_rows is not None and every and (state.iteration % every == 0 or state.iteration == iterations):
                log_rows.append((rep, state.iteration, state.heat, state.value, state.best_value))
        return state


def repetition_seeds(seed: int, repetitions: int) -> List[int]:
    children = np.random.SeedSequence(seed).spawn(repetitions)
    return [int(c.generate_state(1)[0]) for c in children]


def anneal(
    instance: Instance,
    params: AnnealParams,
    callback: Optional[Callable[[int, SolverState], None]] = None,
    start: Optional[Timetable] = None,
) -> AnnealResult:
    """Run ``params.repetitions`` independent restarts and keep the best timetable.

    Raises HeuristicFailure when no initial timetable can be built.
    """
    if start is None:
        start = seed_timetable(instance, params.heuristic_attempts, params.seed)
    problems = check_hard(instance, start)
    if problems:
        raise ValueError("start timetable infeasible: " + describe(problems))
    annealer = Annealer(instance, params)

    rows: List[Tuple[int, int, float, float, float]] = []
    best: Optional[SolverState] = None
    best_rep = -1
    for rep, rep_seed in enumerate(repetition_seeds(params.seed, params.repetitions)):
        state = annealer.run(start, random.Random(rep_seed), params.iterations, rep, callback, rows)
        log.debug("repetition %d best %.3f", rep, state.best_value)
        if best is None or state.best_value < best.best_value:
            best, best_rep = state, rep

    assert best is not None
    tt = best.best_timetable()
    problems = check_hard(instance, tt)
    if problems:
        raise AssertionError("annealer produced an infeasible timetable: " + describe(problems))
    stats = dict(annealer.stats)
    stats.update(
        slot_solves=annealer.solver.calls,
        slot_cache_misses=annealer.solver.misses,
        budget_exceeded=annealer.solver.budget_exceeded,
    )
    return AnnealResult(
        timetable=tt,
        penalties=soft_penalties(instance, tt, params.weights, params.pcbett),
        initial=start,
        initial_penalties=soft_penalties(instance, start, params.weights, params.pcbett),
        best_repetition=best_rep,
        log=rows,
        stats=stats,
    )
