"""Instances, timetables, hard-constraint checks and soft-criterion evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple


@dataclass(frozen=True)
class Violation:
    """One broken invariant or hard constraint."""

    kind: str  # field name for instance checks, H1..H5 for timetables
    index: object
    message: str

    def __str__(self) -> str:
        return f"{self.kind}[{self.index}]: {self.message}"


@dataclass(frozen=True)
class Instance:
    room_capacities: Tuple[int, ...]
    students: Tuple[int, ...]
    conflicts: Mapping[Tuple[int, int], int] = field(default_factory=dict, hash=False)
    timeslot_count: int = 1
    slots_per_day: int = 3

    def __post_init__(self):
        object.__setattr__(self, "room_capacities", tuple(self.room_capacities))
        object.__setattr__(self, "students", tuple(self.students))
        object.__setattr__(self, "conflicts", dict(self.conflicts))

    @property
    def exam_count(self) -> int:
        return len(self.students)

    @property
    def room_count(self) -> int:
        return len(self.room_capacities)

    @cached_property
    def neighbors(self) -> List[List[Tuple[int, int]]]:
        """Per exam, the list of (other exam, conflict weight)."""
        adj: List[List[Tuple[int, int]]] = [[] for _ in range(self.exam_count)]
        for (i, j), w in sorted(self.conflicts.items()):
            adj[i].append((j, w))
            adj[j].append((i, w))
        return adj

    def conflict(self, i: int, j: int) -> int:
        if i > j:
            i, j = j, i
        return self.conflicts.get((i, j), 0)

    def capacity(self, rooms) -> int:
        caps = self.room_capacities
        return sum(caps[r] for r in rooms)

    def day(self, t: int) -> int:
        return t // self.slots_per_day


@dataclass(frozen=True)
class Timetable:
    """Timeslot and room pattern per exam, both indexed by exam id."""

    timeslots: Tuple[int, ...]
    rooms: Tuple[FrozenSet[int], ...]

    def __post_init__(self):
        object.__setattr__(self, "timeslots", tuple(self.timeslots))
        object.__setattr__(self, "rooms", tuple(frozenset(p) for p in self.rooms))

    def slot_members(self, timeslot_count: int) -> List[List[int]]:
        members: List[List[int]] = [[] for _ in range(timeslot_count)]
        for e, t in enumerate(self.timeslots):
            if 0 <= t < timeslot_count:
                members[t].append(e)
        return members

    def with_rooms(self, patterns: Mapping[int, FrozenSet[int]]) -> "Timetable":
        rooms = list(self.rooms)
        for e, p in patterns.items():
            rooms[e] = frozenset(p)
        return Timetable(self.timeslots, tuple(rooms))


@dataclass(frozen=True)
class Weights:
    w1: float = 300.0
    w2: float = 150.0
    w3: float = 5.0
    w4: float = 3000.0
    period_spread: int = 4

    def __post_init__(self):
        if self.period_spread < 1:
            raise ValueError("period_spread must be >= 1")
        if min(self.w1, self.w2, self.w3, self.w4) < 0:
            raise ValueError("weights must be nonnegative")


@dataclass(frozen=True)
class PenaltyBreakdown:
    s1: int
    s2: int
    s3: int
    s4_min_ratio: float
    weighted: float


@dataclass(frozen=True)
class Move:
    """Swap of two exam sets between timeslots ``t1`` and ``t2``.

    ``rooms`` optionally carries the new room patterns of exams in the two
    touched slots; exams not listed keep their pattern.
    """

    t1: int
    t2: int
    from_t1: FrozenSet[int] = frozenset()
    from_t2: FrozenSet[int] = frozenset()
    rooms: Mapping[int, FrozenSet[int]] = field(default_factory=dict, hash=False)

    def new_slots(self) -> Dict[int, int]:
        moved = {e: self.t2 for e in self.from_t1}
        moved.update({e: self.t1 for e in self.from_t2})
        return moved


def validate_instance(instance: Instance) -> List[Violation]:
    out: List[Violation] = []
    for e, nu in enumerate(instance.students):
        if not isinstance(nu, int) or nu < 1:
            out.append(Violation("students", e, f"student count {nu!r} must be a positive integer"))
    for r, cap in enumerate(instance.room_capacities):
        if not isinstance(cap, int) or cap < 1:
            out.append(Violation("room_capacities", r, f"capacity {cap!r} must be a positive integer"))
    n = instance.exam_count
    for key, w in instance.conflicts.items():
        i, j = key
        if i == j:
            out.append(Violation("conflicts", key, "self-conflict"))
        elif not (0 <= i < j < n):
            out.append(Violation("conflicts", key, f"key must satisfy 0 <= i < j < {n}"))
        if not isinstance(w, int) or w < 1:
            out.append(Violation("conflicts", key, f"stored weight {w!r} must be >= 1"))
    if instance.timeslot_count < 1:
        out.append(Violation("timeslot_count", None, "must be >= 1"))
    if instance.slots_per_day < 1:
        out.append(Violation("slots_per_day", None, "must be >= 1"))
    elif instance.slots_per_day > instance.timeslot_count:
        out.append(Violation("slots_per_day", None, "must not exceed timeslot_count"))
    if n < 1:
        out.append(Violation("students", None, "instance needs at least one exam"))
    return out


def check_hard(instance: Instance, tt: Timetable) -> List[Violation]:
    """Return every H1-H5 violation of ``tt``; an empty list means feasible."""
    out: List[Violation] = []
    n, T, R = instance.exam_count, instance.timeslot_count, instance.room_count
    if len(tt.timeslots) != n or len(tt.rooms) != n:
        out.append(Violation("H1", None, f"timetable covers {len(tt.timeslots)} exams, instance has {n}"))
        return out
    used: Dict[Tuple[int, int], int] = {}
    for e in range(n):
        t = tt.timeslots[e]
        if not isinstance(t, int) or not (0 <= t < T):
            out.append(Violation("H1", e, f"timeslot {t!r} outside [0, {T})"))
        pattern = tt.rooms[e]
        if not pattern:
            out.append(Violation("H2", e, "no room assigned"))
        for r in sorted(pattern):
            if not (0 <= r < R):
                out.append(Violation("H2", e, f"unknown room {r}"))
                continue
            other = used.setdefault((t, r), e)
            if other != e:
                out.append(Violation("H4", (t, r), f"room {r} shared by exams {other} and {e}"))
        cap = sum(instance.room_capacities[r] for r in pattern if 0 <= r < R)
        if cap < instance.students[e]:
            out.append(Violation("H5", e, f"capacity {cap} < {instance.students[e]} students"))
    for (i, j), w in sorted(instance.conflicts.items()):
        if w > 0 and tt.timeslots[i] == tt.timeslots[j]:
            out.append(Violation("H3", (i, j), f"conflicting exams share timeslot {tt.timeslots[i]}"))
    return out


def pair_flags(ti: int, tj: int, slots_per_day: int, period_spread: int) -> Tuple[int, int, int]:
    """(two-in-a-row, two-in-a-day, period-spread) indicators for one conflicting pair."""
    d = abs(ti - tj)
    same_day = ti // slots_per_day == tj // slots_per_day
    return (
        int(same_day and d == 1),
        int(same_day and d >= 2),
        int(0 < d < period_spread),
    )


def conflict_counts(instance: Instance, timeslots: Sequence[int], period_spread: int) -> Tuple[int, int, int]:
    s1 = s2 = s3 = 0
    spd = instance.slots_per_day
    for (i, j), w in instance.conflicts.items():
        f1, f2, f3 = pair_flags(timeslots[i], timeslots[j], spd, period_spread)
        s1 += w * f1
        s2 += w * f2
        s3 += w * f3
    return s1, s2, s3


def max_load_ratio(instance: Instance, tt: Timetable) -> float:
    """max over exams of students / pattern capacity (the minimized robustness term)."""
    caps = instance.room_capacities
    worst = 0.0
    for e, nu in enumerate(instance.students):
        cap = sum(caps[r] for r in tt.rooms[e])
        worst = max(worst, math.inf if cap == 0 else nu / cap)
    return worst


def min_capacity_ratio(instance: Instance, tt: Timetable) -> float:
    caps = instance.room_capacities
    best = math.inf
    for e, nu in enumerate(instance.students):
        best = min(best, sum(caps[r] for r in tt.rooms[e]) / nu)
    return best


def weighted_value(weights: Weights, s1: int, s2: int, s3: int, load_ratio: float = 0.0, pcbett_mode: bool = False) -> float:
    value = weights.w1 * s1 + weights.w2 * s2 + weights.w3 * s3
    if pcbett_mode:
        value += weights.w4 * load_ratio
    return value


def soft_penalties(instance: Instance, tt: Timetable, weights: Weights, pcbett_mode: bool = False) -> PenaltyBreakdown:
    s1, s2, s3 = conflict_counts(instance, tt.timeslots, weights.period_spread)
    load = max_load_ratio(instance, tt) if pcbett_mode else 0.0
    return PenaltyBreakdown(
        s1=s1,
        s2=s2,
        s3=s3,
        s4_min_ratio=min_capacity_ratio(instance, tt),
        weighted=weighted_value(weights, s1, s2, s3, load, pcbett_mode),
    )


def conflict_delta(
    instance: Instance,
    timeslots: Sequence[int],
    moved: Mapping[int, int],
    period_spread: int,
) -> Tuple[int, int, int]:
    """Exact change of (s1, s2, s3) when exams in ``moved`` go to their new slots.

    Only pairs touching a moved exam are visited; a pair with both ends moved
    is counted once.
    """
    spd = instance.slots_per_day
    adj = instance.neighbors
    d1 = d2 = d3 = 0
    for e, te_new in moved.items():
        te_old = timeslots[e]
        for f, w in adj[e]:
            if f in moved:
                if f < e:
                    continue
                tf_new = moved[f]
            else:
                tf_new = timeslots[f]
            a1, a2, a3 = pair_flags(te_old, timeslots[f], spd, period_spread)
            b1, b2, b3 = pair_flags(te_new, tf_new, spd, period_spread)
            d1 += w * (b1 - a1)
            d2 += w * (b2 - a2)
            d3 += w * (b3 - a3)
    return d1, d2, d3


def apply_move(tt: Timetable, move: Move) -> Timetable:
    slots = list(tt.timeslots)
    for e, t in move.new_slots().items():
        slots[e] = t
    rooms = list(tt.rooms)
    for e, p in move.rooms.items():
        rooms[e] = frozenset(p)
    return Timetable(tuple(slots), tuple(rooms))


def objective_delta(
    instance: Instance,
    tt: Timetable,
    move: Move,
    weights: Weights,
    pcbett_mode: bool = False,
) -> float:
    """Change of the weighted objective caused by ``move``.

    The conflict part is computed incrementally; the load-ratio term (PCBETT
    mode only) depends on a global maximum and is recomputed.
    """
    d1, d2, d3 = conflict_delta(instance, tt.timeslots, move.new_slots(), weights.period_spread)
    delta = weights.w1 * d1 + weights.w2 * d2 + weights.w3 * d3
    if pcbett_mode and (move.rooms or move.from_t1 or move.from_t2):
        after = apply_move(tt, move)
        delta += weights.w4 * (max_load_ratio(instance, after) - max_load_ratio(instance, tt))
    return delta


def describe(violations: Sequence[Violation], limit: Optional[int] = 5) -> str:
    shown = violations if limit is None else violations[:limit]
    text = "; ".join(str(v) for v in shown)
    if limit is not None and len(violations) > limit:
        text += f"; ... ({len(violations) - limit} more)"
    return text
