"""Exact room assignment for a single timeslot.

Every exam of the slot needs a nonempty set of rooms whose capacities add up
to at least its demand; rooms may stay unused. Two questions are answered
exactly:

* is there any such assignment (``find_feasible``), and
* which assignment maximizes the smallest capacity/demand ratio
  (``find_pcbett_optimal``).

Rooms are indexed as bits of an integer mask, ordered by decreasing
capacity. Search branches exam by exam over inclusion-minimal covering room
subsets, memoizing failed ``(exam, free rooms)`` states, so a ``None``
answer is a proof of infeasibility.
"""

from __future__ import annotations

import itertools
from bisect import bisect_left
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

DEFAULT_NODE_BUDGET = 10**6

Assignment = Dict[int, FrozenSet[int]]


class SearchBudgetExceeded(RuntimeError):
    """The node budget ran out before the search could decide."""


@dataclass(frozen=True)
class SlotProblem:
    exams: Tuple[Tuple[int, int], ...]  # (exam id, demand)
    rooms: Tuple[Tuple[int, int], ...]  # (room id, capacity)
    locked: Mapping[int, FrozenSet[int]] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "exams", tuple((int(e), int(d)) for e, d in self.exams))
        object.__setattr__(self, "rooms", tuple((int(r), int(c)) for r, c in self.rooms))
        object.__setattr__(self, "locked", {e: frozenset(p) for e, p in self.locked.items()})

    def validate(self) -> List[str]:
        issues = []
        exam_ids = {e for e, _ in self.exams}
        room_ids = {r for r, _ in self.rooms}
        if len(exam_ids) != len(self.exams):
            issues.append("duplicate exam id")
        if len(room_ids) != len(self.rooms):
            issues.append("duplicate room id")
        if any(d < 1 for _, d in self.exams):
            issues += [f"exam {e}: demand {d} < 1" for e, d in self.exams if d < 1]
        if any(c < 1 for _, c in self.rooms):
            issues += [f"room {r}: capacity {c} < 1" for r, c in self.rooms if c < 1]
        seen: set = set()
        for e, pattern in self.locked.items():
            if e not in exam_ids:
                issues.append(f"locked pattern for unknown exam {e}")
            if not pattern <= room_ids:
                issues.append(f"exam {e}: locked rooms {sorted(pattern - room_ids)} not in slot")
            if pattern & seen:
                issues.append(f"exam {e}: locked rooms overlap another locked pattern")
            seen |= pattern
        return issues


class _RoomTable:
    """Subset sums over rooms sorted by decreasing capacity."""

    def __init__(self, caps: Tuple[int, ...]):
        self.caps = caps
        size = 1 << len(caps)
        sums = [0] * size
        for m in range(1, size):
            low = m & -m
            sums[m] = sums[m ^ low] + caps[low.bit_length() - 1]
        self.sums = sums
        self._by_sum: Dict[int, Tuple[List[int], List[int]]] = {}
        self._distinct: Dict[int, List[int]] = {}

    def distinct_sums(self, mask: int) -> List[int]:
        """Sorted distinct capacities of all submasks of ``mask``, including 0."""
        hit = self._distinct.get(mask)
        if hit is None:
            hit = sorted(set(self.by_sum(mask)[0]) | {0})
            self._distinct[mask] = hit
        return hit

    def by_sum(self, mask: int) -> Tuple[List[int], List[int]]:
        """Nonempty submasks of ``mask`` sorted by (capacity, mask)."""
        hit = self._by_sum.get(mask)
        if hit is None:
            subs = []
            sub = mask
            while sub:
                subs.append(sub)
                sub = (sub - 1) & mask
            sums = self.sums
            subs.sort(key=lambda s: (sums[s], s))
            hit = ([sums[s] for s in subs], subs)
            if len(self._by_sum) > 4096:
                self._by_sum.clear()
            self._by_sum[mask] = hit
        return hit


@lru_cache(maxsize=64)
def _room_table(caps: Tuple[int, ...]) -> _RoomTable:
    return _RoomTable(caps)


class _Prepared:
    def __init__(self, problem: SlotProblem):
        issues = problem.validate()
        if issues:
            raise ValueError("invalid slot problem: " + "; ".join(issues))
        order = sorted(problem.rooms, key=lambda rc: (-rc[1], rc[0]))
        self.room_ids = [r for r, _ in order]
        self.table = _room_table(tuple(c for _, c in order))
        self.exam_ids = [e for e, _ in problem.exams]
        self.demands = [d for _, d in problem.exams]
        full = (1 << len(order)) - 1
        if not problem.locked:
            self.locked_cap = [0] * len(self.exam_ids)
            self.locked_ids = [frozenset()] * len(self.exam_ids)
            self.free = full
        else:
            bit_of = {r: b for b, r in enumerate(self.room_ids)}
            locked_mask = 0
            self.locked_cap = []
            self.locked_ids = []
            for e in self.exam_ids:
                pattern = problem.locked.get(e, frozenset())
                m = 0
                for r in pattern:
                    m |= 1 << bit_of[r]
                locked_mask |= m
                self.locked_cap.append(self.table.sums[m])
                self.locked_ids.append(frozenset(pattern))
            self.free = full & ~locked_mask
        self._ids: Dict[int, FrozenSet[int]] = {}
        self._keys: Dict[Tuple[int, int], Tuple[int, ...]] = {}

    def ids(self, mask: int) -> FrozenSet[int]:
        hit = self._ids.get(mask)
        if hit is None:
            hit = frozenset(self.room_ids[b] for b in range(mask.bit_length()) if mask >> b & 1)
            self._ids[mask] = hit
        return hit

    def pattern_key(self, i: int, mask: int) -> Tuple[int, ...]:
        """Sorted room ids of exam ``i`` (locked rooms plus ``mask``), for tie-breaking."""
        key = (i, mask) if self.locked_ids[i] else (-1, mask)
        hit = self._keys.get(key)
        if hit is None:
            hit = tuple(sorted(self.locked_ids[i] | self.ids(mask)))
            self._keys[key] = hit
        return hit

    def needs_at(self, num: int, den: int) -> List[int]:
        """Extra capacity each exam needs so that capacity/demand >= num/den.

        0 means the locked pattern already suffices.
        """
        out = []
        for d, lc, lk in zip(self.demands, self.locked_cap, self.locked_ids):
            target = max(1, -(-num * d // den))
            need = target - lc
            out.append(need if need > 0 or not lk else 0)
        return out

    def assignment(self, masks: Sequence[int]) -> Assignment:
        return {
            e: lk | self.ids(m)
            for e, lk, m in zip(self.exam_ids, self.locked_ids, masks)
        }


class _Counter:
    __slots__ = ("budget", "nodes")

    def __init__(self, budget: int):
        self.budget = budget
        self.nodes = 0


def _first_fit(prep: _Prepared, needs: Sequence[int], counter: _Counter) -> Optional[List[int]]:
    """Depth-first search for any assignment; returns one mask per exam."""
    table = prep.table
    sums = table.sums
    caps = table.caps
    order = sorted((i for i, n in enumerate(needs) if n > 0), key=lambda i: (-needs[i], i))
    k = len(order)
    tail = [0] * (k + 1)
    for pos in range(k - 1, -1, -1):
        tail[pos] = tail[pos + 1] + needs[order[pos]]
    failed: set = set()
    picked = [0] * k

    def rec(pos: int, mask: int) -> bool:
        if pos == k:
            return True
        if (pos, mask) in failed:
            return False
        need = needs[order[pos]]
        rest_need = tail[pos + 1]
        rest_cnt = k - pos - 1
        total = sums[mask]
        cover_sums, covers = table.by_sum(mask)
        limit = need + caps[(mask & -mask).bit_length() - 1]
        for idx in range(bisect_left(cover_sums, need), len(covers)):
            s = cover_sums[idx]
            if s >= limit or total - s < rest_need:
                break
            sub = covers[idx]
            if s - caps[sub.bit_length() - 1] >= need:
                continue  # not inclusion-minimal
            counter.nodes += 1
            left = mask ^ sub
            if left.bit_count() < rest_cnt:
                continue
            picked[pos] = sub
            if rec(pos + 1, left):
                return True
        if counter.nodes > counter.budget:
            raise SearchBudgetExceeded(f"room assignment exceeded {counter.budget} nodes")
        failed.add((pos, mask))
        return False

    if k == 0:
        return [0] * len(needs)
    if tail[0] > sums[prep.free] or k > prep.free.bit_count():
        return None
    if not rec(0, prep.free):
        return None
    masks = [0] * len(needs)
    for pos, i in enumerate(order):
        masks[i] = picked[pos]
    return masks


def _fewest_rooms(prep: _Prepared, needs: Sequence[int], counter: _Counter) -> Optional[List[int]]:
    """Exhaustive search for the assignment using the fewest rooms.

    Ties are broken by the lexicographically smallest tuple of sorted room
    ids per exam, in problem order.
    """
    table = prep.table
    sums = table.sums
    caps = table.caps
    n = len(needs)
    tail = [0] * (n + 1)
    cnt = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        tail[i] = tail[i + 1] + max(needs[i], 0)
        cnt[i] = cnt[i + 1] + (needs[i] > 0)
    memo: Dict[Tuple[int, int], Optional[tuple]] = {}

    def rec(i: int, mask: int):
        if i == n:
            return (0, (), ())
        key = (i, mask)
        if key in memo:
            return memo[key]
        need = needs[i]
        best = None
        if need <= 0:
            sub_best = rec(i + 1, mask)
            if sub_best is not None:
                best = (sub_best[0], (prep.pattern_key(i, 0),) + sub_best[1], (0,) + sub_best[2])
        elif mask:
            total = sums[mask]
            cover_sums, covers = table.by_sum(mask)
            limit = need + caps[(mask & -mask).bit_length() - 1]
            for idx in range(bisect_left(cover_sums, need), len(covers)):
                s = cover_sums[idx]
                if s >= limit or total - s < tail[i + 1]:
                    break
                sub = covers[idx]
                if s - caps[sub.bit_length() - 1] >= need:
                    continue
                counter.nodes += 1
                left = mask ^ sub
                if left.bit_count() < cnt[i + 1]:
                    continue
                r = rec(i + 1, left)
                if r is None:
                    continue
                rooms = r[0] + sub.bit_count()
                if best is not None and rooms > best[0]:
                    continue
                keys = (prep.pattern_key(i, sub),) + r[1]
                if best is None or rooms < best[0] or keys < best[1]:
                    best = (rooms, keys, (sub,) + r[2])
            if counter.nodes > counter.budget:
                raise SearchBudgetExceeded(f"room assignment exceeded {counter.budget} nodes")
        memo[key] = best
        return best

    result = rec(0, prep.free)
    return None if result is None else list(result[2])


def find_feasible(problem: SlotProblem, node_budget: int = DEFAULT_NODE_BUDGET) -> Optional[Assignment]:
    """Return any feasible assignment, or None if none exists.

    Covers are tried tightest-first. Exams whose locked rooms already meet
    their demand receive no further rooms.

    Raises:
        SearchBudgetExceeded: the search visited more than ``node_budget`` nodes.
    """
    prep = _Prepared(problem)
    needs = prep.needs_at(1, 1)
    masks = _first_fit(prep, needs, _Counter(node_budget))
    return None if masks is None else prep.assignment(masks)


def _ratio_candidates(prep: _Prepared, lo: Tuple[int, int], hi: Tuple[int, int]) -> List[Tuple[int, int]]:
    """Distinct ratios (locked + subset capacity) / demand inside [lo, hi], ascending."""
    free_sums = prep.table.distinct_sums(prep.free)
    seen = {}
    for d, lc in set(zip(prep.demands, prep.locked_cap)):
        # integer window of subset capacities s with lo <= (lc + s) / d <= hi
        s_lo = -(-lo[0] * d // lo[1]) - lc
        s_hi = hi[0] * d // hi[1] - lc
        for idx in range(bisect_left(free_sums, s_lo), len(free_sums)):
            s = free_sums[idx]
            if s > s_hi:
                break
            num = lc + s
            if num:
                seen.setdefault(num / d, (num, d))
    return [seen[k] for k in sorted(seen)]


def find_pcbett_optimal(problem: SlotProblem, node_budget: int = DEFAULT_NODE_BUDGET) -> Optional[Assignment]:
    """Return a feasible assignment maximizing min over exams of capacity/demand.

    Among optimal assignments the one with the fewest rooms wins, then the
    lexicographically smallest room-id patterns in problem order.
    Returns None if the slot is infeasible.
    """
    prep = _Prepared(problem)
    counter = _Counter(node_budget)
    if not prep.exam_ids:
        return {}
    first = _first_fit(prep, prep.needs_at(1, 1), counter)
    if first is None:
        return None

    def ratio_of(masks) -> Tuple[int, int]:
        best = None
        for d, lc, m in zip(prep.demands, prep.locked_cap, masks):
            r = (lc + prep.table.sums[m], d)
            if best is None or r[0] * best[1] < best[0] * r[1]:
                best = r
        return best

    lo = ratio_of(first)
    total_free = prep.table.sums[prep.free]
    hi = (sum(prep.locked_cap) + total_free, sum(prep.demands))
    for d, lc in zip(prep.demands, prep.locked_cap):
        if (lc + total_free) * hi[1] < hi[0] * d:
            hi = (lc + total_free, d)
    if lo[0] * hi[1] == hi[0] * lo[1]:
        # greedy already meets the upper bound
        masks = _fewest_rooms(prep, prep.needs_at(*lo), counter)
        return prep.assignment(masks)
    cands = _ratio_candidates(prep, lo, hi)
    # cands[0] is lo itself (attained), so the search keeps a feasible witness
    left, right = 0, len(cands) - 1
    while left < right:
        mid = (left + right + 1) // 2
        if _first_fit(prep, prep.needs_at(*cands[mid]), counter) is not None:
            left = mid
        else:
            right = mid - 1
    best = cands[left] if cands else lo
    masks = _fewest_rooms(prep, prep.needs_at(*best), counter)
    assert masks is not None
    return prep.assignment(masks)


def min_ratio(problem: SlotProblem, assignment: Assignment, capacities: Mapping[int, int] = None) -> float:
    caps = capacities or dict(problem.rooms)
    return min(sum(caps[r] for r in assignment[e]) / d for e, d in problem.exams) if problem.exams else float("inf")


def check_assignment(problem: SlotProblem, assignment: Assignment) -> List[str]:
    """Slot-local H2/H4/H5 check of an assignment."""
    caps = dict(problem.rooms)
    issues = []
    used: Dict[int, int] = {}
    for e, d in problem.exams:
        pattern = assignment.get(e, frozenset())
        if not pattern:
            issues.append(f"exam {e}: no rooms")
        for r in pattern:
            if r not in caps:
                issues.append(f"exam {e}: unknown room {r}")
            elif used.setdefault(r, e) != e:
                issues.append(f"room {r} used by exams {used[r]} and {e}")
        if sum(caps.get(r, 0) for r in pattern) < d:
            issues.append(f"exam {e}: capacity below demand {d}")
        if not problem.locked.get(e, frozenset()) <= pattern:
            issues.append(f"exam {e}: locked rooms dropped")
    return issues


def minimal_reduction(pattern, capacities, demand: int) -> FrozenSet[int]:
    """Smallest subset of ``pattern`` still seating ``demand`` students.

    Minimizes the number of rooms, then the kept capacity, then the sorted
    room ids. ``capacities`` maps room id to capacity.
    """
    rooms = sorted(pattern)
    if sum(capacities[r] for r in rooms) < demand:
        raise ValueError(f"pattern {rooms} cannot seat {demand} students")
    for k in range(1, len(rooms) + 1):
        best = None
        for combo in itertools.combinations(rooms, k):
            cap = sum(capacities[r] for r in combo)
            if cap >= demand and (best is None or (cap, combo) < best):
                best = (cap, combo)
        if best is not None:
            return frozenset(best[1])
    return frozenset(rooms)
