import math
import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_ettp import annealer as annealer_mod
from robust_ettp.annealer import (
    AnnealParams,
    Annealer,
    HeuristicFailure,
    anneal,
    initial_heuristic,
    kempe_chain,
    seed_timetable,
)
from robust_ettp.generator import ScenarioConfig, generate_instance
from robust_ettp.model import Instance, Timetable, check_hard, conflict_counts

SMALL = ScenarioConfig(exam_count=24, room_count=4, timeslot_count=9, conflict_p=0.25)
QUICK = AnnealParams(iterations=600, cooling_limit=200, repetitions=2)


def test_single_exam_single_slot():
    inst = Instance((50,), (30,), {}, timeslot_count=1, slots_per_day=1)
    assert initial_heuristic(inst) == Timetable((0,), (frozenset({0}),))


def test_conflicting_pair_gets_two_slots():
    inst = Instance((50,), (30, 20), {(0, 1): 1}, timeslot_count=2, slots_per_day=1)
    tt = initial_heuristic(inst)
    assert tt.timeslots[0] != tt.timeslots[1]


def test_heuristic_failure():
    inst = Instance((50,), (30, 20), {(0, 1): 1}, timeslot_count=1, slots_per_day=1)
    with pytest.raises(HeuristicFailure):
        initial_heuristic(inst)
    with pytest.raises(HeuristicFailure):
        anneal(inst, replace(QUICK, iterations=1, cooling_limit=1))


def test_heuristic_on_suppressed_instances():
    config = replace(SMALL, suppress_seed_conflicts=True)
    for seed in range(30):
        inst, _ = generate_instance(config, seed)
        try:
            tt = seed_timetable(inst, attempts=5, seed=seed)
        except HeuristicFailure:
            continue  # the greedy is not complete; failures are reported, never wrong
        assert check_hard(inst, tt) == []


def test_kempe_isolated_exam():
    inst = Instance((1,), (1, 1), {}, timeslot_count=2, slots_per_day=1)
    assert kempe_chain((0, 1), inst, 0, 1) == (frozenset({0}), frozenset())


def test_kempe_path():
    # e=0 in slot 0 conflicts with f=1 in slot 1, which conflicts with g=2 in slot 0
    inst = Instance((1,), (1, 1, 1), {(0, 1): 1, (1, 2): 1}, timeslot_count=2, slots_per_day=1)
    assert kempe_chain((0, 1, 0), inst, 0, 1) == (frozenset({0, 2}), frozenset({1}))


def test_kempe_same_slot_rejected():
    inst = Instance((1,), (1,), {}, timeslot_count=2, slots_per_day=1)
    with pytest.raises(ValueError):
        kempe_chain((0,), inst, 0, 0)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_kempe_swap_keeps_h3(seed):
    rng = random.Random(seed)
    n, T = rng.randint(2, 12), rng.randint(2, 4)
    # build a conflict graph that is proper for a random colouring
    slots = [rng.randrange(T) for _ in range(n)]
    conflicts = {
        (i, j): 1 for i in range(n) for j in range(i + 1, n) if slots[i] != slots[j] and rng.random() < 0.5
    }
    inst = Instance((1,), (1,) * n, conflicts, timeslot_count=T, slots_per_day=1)
    e = rng.randrange(n)
    t2 = rng.choice([t for t in range(T) if t != slots[e]])
    a, b = kempe_chain(slots, inst, e, t2)
    new = list(slots)
    for x in a:
        new[x] = t2
    for x in b:
        new[x] = slots[e]
    assert all(new[i] != new[j] for i, j in conflicts)


def seedable(seed, config=SMALL):
    """First generated instance from ``seed`` on that the greedy can start from."""
    while True:
        inst, _ = generate_instance(config, seed)
        try:
            seed_timetable(inst)
            return inst
        except HeuristicFailure:
            seed += 1


def small_annealer(pcbett=False, **kw):
    inst = seedable(3)
    return inst, Annealer(inst, replace(QUICK, pcbett=pcbett, **kw))


def test_acceptance_probability():
    _, ann = small_annealer()
    assert ann.acceptance_probability(0, 1.0) == 1.0
    assert ann.acceptance_probability(-5, 1.0) == 1.0
    # the cheapest violation at the lowest heat is effectively rejected
    assert ann.acceptance_probability(5, 1.0) < 1e-6
    assert ann.acceptance_probability(5, 100.0) == pytest.approx(math.exp(-1))


def test_default_cooling_rate_spans_one_cycle():
    p = AnnealParams()
    assert p.alpha == pytest.approx(0.999079, abs=1e-6)
    assert p.heat_max * p.alpha ** p.cooling_limit == pytest.approx(p.heat_min)


def test_param_validation():
    assert AnnealParams(heat_min=0.5).problems()
    assert AnnealParams(iterations=10, cooling_limit=20).problems()
    assert AnnealParams(cooling_rate=1.0).problems()


@pytest.mark.parametrize("pcbett", [False, True])
def test_heat_bounds_reset_and_feasibility(pcbett):
    inst, ann = small_annealer(pcbett)
    start = seed_timetable(inst)
    state = ann.start_state(start)
    rng = random.Random(0)
    p = ann.params
    best = state.best_value
    for _ in range(p.iterations):
        ann.propose_and_accept(state, rng)
        assert p.heat_min <= state.heat <= p.heat_max
        if state.iteration % p.cooling_limit == 0:
            assert state.heat == p.heat_max
        assert state.best_value <= best
        best = state.best_value
        assert check_hard(inst, state.timetable()) == []
        assert tuple(state.counts) == conflict_counts(inst, state.slot_of, p.weights.period_spread)
        assert state.value == pytest.approx(ann.value_of(state.counts, state.slot_load))


def test_zero_conflicts_objective_zero():
    inst, _ = generate_instance(replace(SMALL, conflict_p=0.0), 1)
    res = anneal(inst, QUICK)
    assert res.penalties.weighted == 0


def test_result_not_worse_than_start_and_replays():
    inst = seedable(8)
    a = anneal(inst, replace(QUICK, seed=5))
    b = anneal(inst, replace(QUICK, seed=5))
    assert a.penalties.weighted <= a.initial_penalties.weighted
    assert a.timetable == b.timetable and a.log == b.log
    assert check_hard(inst, a.timetable) == []


def test_nominal_never_calls_pcbett_solver(monkeypatch):
    def boom(*args, **kwargs):
        raise AssertionError("pcbett solver called in nominal mode")

    monkeypatch.setattr(annealer_mod, "find_pcbett_optimal", boom)
    inst = seedable(2)
    anneal(inst, replace(QUICK, weights=replace(QUICK.weights, w4=0.0)))


def test_pcbett_improves_min_ratio():
    inst = seedable(6)
    nominal = anneal(inst, replace(QUICK, iterations=1500, cooling_limit=500))
    robust = anneal(inst, replace(QUICK, iterations=1500, cooling_limit=500, pcbett=True))
    assert robust.penalties.s4_min_ratio >= nominal.penalties.s4_min_ratio


def test_callback_sees_every_iteration():
    inst = seedable(1)
    seen = []
    anneal(inst, QUICK, callback=lambda rep, state: seen.append((rep, state.iteration)))
    assert len(seen) == QUICK.iterations * QUICK.repetitions
    assert seen[-1] == (QUICK.repetitions - 1, QUICK.iterations)
