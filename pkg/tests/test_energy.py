import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehsgd.energy import (Bernoulli, DeterministicSchedule, UniformWindow, gaps, inter_arrival,
                          interval_bounds, periodic_schedule, realize_arrivals, realize_trace)
from ehsgd.exceptions import InvalidModel


def trace_of(times, horizon):
    return realize_trace(DeterministicSchedule(tuple(times)), horizon)


@pytest.mark.parametrize("t", [4, 5])
def test_interior_gap(t):
    ia = inter_arrival(trace_of((0, 4, 10), 12), t)
    assert (ia.prev, ia.next, ia.gap) == (4, 10, 6)
    assert not ia.next_is_horizon


def test_no_prior_arrival():
    ia = inter_arrival(trace_of((3,), 10), 1)
    assert ia.prev is None and ia.gap is None


def test_horizon_end_sentinel():
    ia = inter_arrival(trace_of((0, 4, 10), 12), 11)
    assert (ia.prev, ia.next, ia.gap) == (10, 12, 2)
    assert ia.next_is_horizon


def test_out_of_range_t():
    with pytest.raises(IndexError):
        inter_arrival(trace_of((0,), 5), 5)


@pytest.mark.parametrize("bad", [(-1, 2), (3, 3), (5, 2)])
def test_schedule_validation(bad):
    with pytest.raises(InvalidModel):
        DeterministicSchedule(bad)


@pytest.mark.parametrize("beta", [0.0, -0.1, 1.5, float("nan")])
def test_bernoulli_validation(beta):
    with pytest.raises(InvalidModel):
        Bernoulli(beta)


@pytest.mark.parametrize("period", [0, 2.5, True])
def test_window_validation(period):
    with pytest.raises(InvalidModel):
        UniformWindow(period)


def test_schedule_beyond_horizon_rejected():
    with pytest.raises(InvalidModel):
        realize_arrivals(DeterministicSchedule((0, 9)), 5)


def test_periodic_schedule():
    assert periodic_schedule(5, 12).times == (0, 5, 10)
    assert periodic_schedule(4, 12, offset=1).times == (1, 5, 9)


def test_bernoulli_frequency():
    H, beta = 100_000, 0.25
    e = realize_arrivals(Bernoulli(beta), H, seed=1, user=2)
    assert abs(e.mean() - beta) <= 3 * np.sqrt(beta * (1 - beta) / H)


def test_uniform_window_one_per_window_and_uniform_slots():
    T, M = 5, 100_000
    e = realize_arrivals(UniformWindow(T), 3 * T, seed=np.arange(M), user=0)
    assert e.shape == (M, 3 * T)
    assert np.all(e.reshape(M, 3, T).sum(axis=2) == 1)
    freq = e[:, :T].mean(axis=0)
    assert np.all(np.abs(freq - 1 / T) <= 3 * np.sqrt((1 / T) * (1 - 1 / T) / M))


def test_uniform_window_partial_last_window():
    e = realize_arrivals(UniformWindow(4), 6, seed=np.arange(2000))
    assert np.all(e[:, :4].sum(axis=1) == 1)
    assert np.all(e[:, 4:].sum(axis=1) <= 1)


def test_batched_rows_match_single_seed():
    seeds = np.array([3, 9])
    batch = realize_arrivals(Bernoulli(0.4), 50, seeds, user=1)
    for r, s in enumerate(seeds):
        assert np.array_equal(batch[r], realize_arrivals(Bernoulli(0.4), 50, int(s), user=1))


def test_gaps_zero_before_first_arrival():
    e = realize_arrivals(DeterministicSchedule((2, 5)), 8)
    assert gaps(e).tolist() == [0, 0, 3, 3, 3, 3, 3, 3]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=40))
def test_interval_bounds_brute_force(bits):
    e = np.array(bits)
    H = len(e)
    prev, nxt = interval_bounds(e)
    for t in range(H):
        before = [k for k in range(t + 1) if e[k]]
        after = [k for k in range(t + 1, H) if e[k]]
        assert prev[t] == (before[-1] if before else -1)
        assert nxt[t] == (after[0] if after else H)
        if before:
            # no arrival strictly between prev and next
            assert not e[prev[t] + 1: nxt[t]].any()
