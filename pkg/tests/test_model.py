import numpy as np
import pytest
from hypothesis import given, strategies as st

from aoisched.model import (ArrivalProcess, SystemState, TerminalState, aoi, make_generator,
                            slot_cost, step_terminal)

states = st.builds(TerminalState, st.integers(1, 500), st.integers(0, 500))


@pytest.mark.parametrize("sched,arr,expect", [
    (False, False, (4, 2)),
    (False, True, (1, 5)),
    (True, True, (1, 3)),
    (True, False, (4, 0)),
])
def test_step_table(sched, arr, expect):
    assert step_terminal(TerminalState(3, 2), sched, arr) == TerminalState(*expect)


def test_fresh_delivered_no_arrival():
    assert step_terminal(TerminalState(1, 0), True, False) == TerminalState(2, 0)


def test_aoi_and_cost_examples():
    assert aoi(TerminalState(1, 0)) == 1
    assert aoi(TerminalState(3, 2)) == 5
    assert aoi(TerminalState(7, 0)) == 7
    assert slot_cost(TerminalState(3, 2), False) == 5
    assert slot_cost(TerminalState(3, 2), True) == 3
    assert slot_cost(TerminalState(1, 0), True) == slot_cost(TerminalState(1, 0), False) == 1


@pytest.mark.parametrize("a,d", [(0, 0), (1, -1), (-3, 2)])
def test_invalid_state(a, d):
    with pytest.raises(ValueError):
        TerminalState(a, d)


@pytest.mark.invariant
@given(states, st.booleans(), st.booleans())
def test_aoi_recurrence(s, sched, arr):
    # next AoI is h+1 without delivery and a+1 (drop of d) with delivery
    nxt = step_terminal(s, sched, arr)
    assert nxt.a >= 1 and nxt.d >= 0
    assert aoi(nxt) - aoi(s) == (1 - s.d if sched else 1)


@pytest.mark.invariant
@given(states, st.integers(0, 200))
def test_idle_composition(s, tau):
    x = s
    for _ in range(tau):
        x = step_terminal(x, False, False)
    assert aoi(x) == aoi(s) + tau


def test_system_collision_delivers_nothing():
    sys0 = SystemState.from_pairs([(2, 3), (1, 4)])
    nxt = sys0.step((0, 1), [False, False])
    assert nxt == SystemState.from_pairs([(3, 3), (2, 4)])
    one = sys0.step((1,), [False, False])
    assert one == SystemState.from_pairs([(3, 3), (2, 0)])


def test_initial_state():
    s = SystemState.initial(3)
    assert len(s) == 3 and all(t == TerminalState(1, 0) for t in s)


@pytest.mark.invariant
@pytest.mark.parametrize("lam", [0.05, 0.3, 0.5, 0.9])
def test_arrival_frequency(lam):
    T = 200_000
    x = ArrivalProcess([lam], seed=11).sample(T)[:, 0]
    assert abs(x.mean() - lam) <= 4 * np.sqrt(lam * (1 - lam) / T)


def test_arrivals_reproducible_and_chunk_invariant():
    a = ArrivalProcess([0.3, 0.6], seed=5).sample(1000)
    p = ArrivalProcess([0.3, 0.6], seed=5)
    b = np.vstack([p.sample(400), p.sample(600)])
    assert np.array_equal(a, b)
    # terminal 0's stream does not depend on the other rates
    c = ArrivalProcess([0.3, 0.1, 0.9], seed=5).sample(1000)
    assert np.array_equal(a[:, 0], c[:, 0])


def test_substreams_differ():
    x = make_generator(1, 0, 0).random(5)
    y = make_generator(1, 1, 0).random(5)
    assert not np.allclose(x, y)


def test_rates_validated():
    with pytest.raises(ValueError):
        ArrivalProcess([1.2])
