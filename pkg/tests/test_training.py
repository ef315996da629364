import csv
import io

import numpy as np
import pytest

from ehsgd.energy import DeterministicSchedule, periodic_schedule
from ehsgd.exceptions import DimensionMismatch, PremiseViolated, StarvationDetected
from ehsgd.objective import SyntheticSpec, make_synthetic
from ehsgd.training import (CSV_HEADER, ContributionBatch, LearningRate, RunConfig, learning_rate,
                            max_stable_rate, run, server_update)


def batch(p, gamma, grads):
    grads = np.asarray(grads, float)
    return ContributionBatch(0, np.arange(len(p)), np.asarray(p, float), np.asarray(gamma, float), grads)


def test_server_update_single():
    assert server_update(np.zeros(1), batch([1.0], [1.0], [[2.0]]), 0.1).tolist() == [pytest.approx(-0.2)]


def test_server_update_empty():
    w = np.array([1.0, 2.0])
    out = server_update(w, ContributionBatch(0, np.array([], int), np.array([]), np.array([]),
                                             np.zeros((0, 2))), 0.5)
    assert np.array_equal(out, w)


def test_server_update_two_users():
    out = server_update(np.zeros(1), batch([0.5, 0.5], [6.0, 1.0], [[1.0], [-1.0]]), 1.0)
    assert out.tolist() == [-2.5]


def test_server_update_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        server_update(np.zeros(2), batch([1.0], [1.0], [[1.0, 2.0, 3.0]]), 0.1)


def test_learning_rate_schedules():
    assert learning_rate(LearningRate(0.1), 999) == 0.1
    assert learning_rate(LearningRate(1.0, 1.0), 3) == 0.25
    rates = [learning_rate(LearningRate(0.5, 0.3), t) for t in range(50)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))
    with pytest.raises(ValueError):
        LearningRate(0.0)


def quad_config(policy="full", n=4, horizon=500, eta=1.0, periods=None, **kw):
    spec = SyntheticSpec(kind="quadratic", n_users=n, dim=3, points_per_user=1, seed=1)
    arrivals = None if periods is None else [periodic_schedule(T, horizon) for T in periods]
    return RunConfig(n, horizon, policy, spec, arrivals, LearningRate(eta), **kw)


def test_full_participation_converges_monotonically():
    trace = run(quad_config(eta=0.5))
    assert np.all(np.diff(trace.loss_gap) <= 1e-15)
    assert trace.final_gap <= 1e-6
    assert np.all(trace.loss_gap >= -1e-9)


def test_alg1_every_step_is_bitwise_full():
    a = run(quad_config("alg1", periods=[1] * 4, horizon=200, eta=0.3), record_participation=True)
    b = run(quad_config("full", horizon=200, eta=0.3), record_participation=True)
    assert np.array_equal(a.global_loss, b.global_loss)
    assert np.array_equal(a.final_w, b.final_w)


def test_seed_determinism():
    spec = SyntheticSpec(kind="logistic", n_users=6, dim=4, points_per_user=8, seed=3)
    cfg = RunConfig(6, 300, "alg1", spec, [periodic_schedule(T, 300) for T in (1, 2, 3, 4, 5, 6)],
                    LearningRate(0.1), seed=9)
    a, b = run(cfg), run(cfg)
    assert a.to_csv() == b.to_csv()
    assert np.array_equal(a.final_w, b.final_w)
    other = run(RunConfig(**{**cfg.__dict__, "seed": 10}))
    assert not np.array_equal(a.final_w, other.final_w)


def test_gradient_count_equals_participations():
    trace = run(quad_config("alg1", n=6, periods=[1, 2, 3, 4, 5, 6], horizon=300, eta=0.2),
                record_participation=True)
    assert trace.n_gradient_evals == int(trace.participation.sum())
    assert trace.n_gradient_evals == int(trace.num_participants.sum())
    assert trace.energy_spent[-1] == trace.n_gradient_evals


def test_participations_never_exceed_arrivals():
    trace = run(quad_config("naive", n=4, periods=[1, 3, 5, 7], horizon=100, eta=0.2), record_participation=True)
    assert np.all(np.cumsum(trace.participation, 1) <= np.cumsum(trace.arrivals, 1))


def test_counters_monotone_and_groups():
    trace = run(quad_config("alg1", n=8, periods=[1, 5] * 4, horizon=200, eta=0.1, n_groups=2,
                            metric_every=10))
    assert trace.iterations.tolist() == list(range(9, 200, 10))
    assert np.all(np.diff(trace.energy_spent) >= 0)
    assert np.all(np.diff(trace.energy_wasted) >= 0)
    assert np.all(np.diff(trace.group_participation, axis=0) >= 0)
    assert trace.group_participation[-1].sum() == trace.n_gradient_evals


def test_mean_participants_group_periods():
    H = 2000
    models = [periodic_schedule((1, 5, 10, 20)[i % 4], H) for i in range(40)]
    spec = SyntheticSpec(kind="quadratic", n_users=40, dim=2, points_per_user=1, seed=0)
    trace = run(RunConfig(40, H, "alg1", spec, models, LearningRate(0.01)))
    assert trace.n_gradient_evals / H == pytest.approx(13.5, rel=0.05)


def test_csv_format():
    trace = run(quad_config(horizon=5, eta=0.5))
    rows = list(csv.reader(io.StringIO(trace.to_csv())))
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 6
    for r, f in zip(rows[1:], trace.global_loss):
        assert float(r[1]) == f  # shortest round-trip repr


def test_bound_mode_rejects_large_rate():
    assert max_stable_rate(1.0, 1.0) == 0.5
    with pytest.raises(PremiseViolated):
        run(quad_config(eta=0.6, check_bound=True))
    with pytest.raises(PremiseViolated):
        run(RunConfig(**{**quad_config().__dict__, "lr": LearningRate(0.1, 1.0), "check_bound": True}))


def test_wait_for_all_starvation():
    spec = SyntheticSpec(n_users=2, dim=1, seed=0)
    cfg = RunConfig(2, 50, "wait_for_all", spec, [DeterministicSchedule((0,)), DeterministicSchedule(())],
                    LearningRate(0.1))
    with pytest.raises(StarvationDetected):
        run(cfg)


def test_config_validation():
    spec = SyntheticSpec(n_users=2, dim=1)
    with pytest.raises(ValueError):
        RunConfig(2, 0, "full", spec)
    with pytest.raises(ValueError):
        RunConfig(2, 10, "alg1", spec)
    with pytest.raises(ValueError):
        RunConfig(2, 10, "naive", spec, [DeterministicSchedule((0,))])
    with pytest.raises(ValueError):
        run(RunConfig(3, 10, "full", make_synthetic(spec)))


def test_w0_shape_checked():
    with pytest.raises(DimensionMismatch):
        run(RunConfig(**{**quad_config().__dict__, "w0": np.zeros(5)}))
