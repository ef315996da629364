import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehsgd import analysis
from ehsgd.analysis import BoundInputs, compute_C, convergence_bound, geometric_term, transient_rate
from ehsgd.energy import Bernoulli, DeterministicSchedule, UniformWindow, periodic_schedule
from ehsgd.exceptions import InvalidWeights, PremiseViolated

simplex = st.lists(st.floats(0.01, 10.0), min_size=1, max_size=12).map(lambda v: np.array(v) / np.sum(v))


def test_compute_C_examples():
    assert compute_C([0.5, 0.5], [1, 1], 1.0) == 1.0
    assert compute_C([0.5, 0.5], [3, 5], 2.0) == 10.0


@settings(max_examples=100, deadline=None)
@given(simplex, st.floats(0.1, 5.0))
def test_C_with_unit_t_max_is_G2(p, G):
    assert compute_C(p, np.ones(len(p)), G) == pytest.approx(G * G, rel=1e-12)


def test_compute_C_rejects_bad_weights():
    with pytest.raises(InvalidWeights):
        compute_C([0.5, 0.6], [1, 1], 1.0)
    with pytest.raises(ValueError):
        compute_C([0.5, 0.5], [0.5, 1], 1.0)


def test_t_max_substitutions():
    assert analysis.t_max_for_model(Bernoulli(0.25), 100) == 4.0
    assert analysis.t_max_for_model(UniformWindow(6), 100) == 6.0
    assert analysis.t_max_for_model(DeterministicSchedule((0, 2, 9)), 12) == 7.0
    assert analysis.t_max_for_model(DeterministicSchedule((0, 2, 5)), 12) == 7.0  # tail gap 12 - 5


def inputs(**kw):
    base = dict(mu=1.0, L=1.0, eta=0.5, T=0, initial_gap=1.0, p=[1.0], t_max=[2.0], G=np.sqrt(0.5))
    base.update(kw)
    return BoundInputs(**base)


def test_bound_limit():
    assert inputs().C == pytest.approx(1.0)
    assert convergence_bound(inputs(T=10_000)) == pytest.approx(0.25)


def test_bound_at_zero():
    i = inputs(T=0, initial_gap=3.0, L=1.5, mu=1.0, eta=0.25)
    C = i.C
    expected = 1.5 * (3.0 - 0.25 * C / 2) + 0.25 * 1.5 * C / 2
    assert convergence_bound(i) == pytest.approx(expected)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 2.0), st.floats(1.0, 4.0), st.floats(0.01, 1.0), st.integers(1, 500),
       st.floats(0.0, 50.0), st.floats(0.1, 3.0))
def test_geometric_recursion(mu, ratio, eta_frac, T, gap, G):
    L = mu * ratio
    eta = eta_frac * min(1 / (2 * mu), 1 / L)
    a = geometric_term(inputs(mu=mu, L=L, eta=eta, T=T, initial_gap=gap, G=G))
    b = geometric_term(inputs(mu=mu, L=L, eta=eta, T=T - 1, initial_gap=gap, G=G))
    assert a == pytest.approx((1 - eta * mu) * b, rel=1e-12, abs=1e-300)


def test_bound_non_increasing_when_gap_large():
    vals = [convergence_bound(inputs(T=T, initial_gap=5.0)) for T in range(30)]
    assert all(x >= y for x, y in zip(vals, vals[1:]))


def test_bound_can_go_negative_without_clamping():
    # small initial gap, large C: first term negative early on
    assert geometric_term(inputs(initial_gap=0.0, t_max=[10.0], G=2.0)) < 0


def test_premise():
    with pytest.raises(PremiseViolated):
        convergence_bound(inputs(eta=0.6))
    with pytest.raises(PremiseViolated):
        convergence_bound(inputs(mu=2.0, L=1.0, eta=0.1))


def test_stochastic_t_max_substitution():
    p = [0.5, 0.5]
    t_max = [analysis.t_max_for_model(m, 50) for m in (Bernoulli(0.5), UniformWindow(4))]
    assert compute_C(p, t_max, 1.0) == pytest.approx((0.25 * 1 + 0.25 * 3) + 1.0)


def test_unbiased_single_bernoulli():
    r = analysis.unbiasedness_test("best_effort", [Bernoulli(0.5)], [[1.0]], [1.0], t=0, horizon=1,
                                   n_draws=20_000)
    assert r.passed and r.target.tolist() == [1.0]


def test_alg1_gap_six_unbiased():
    r = analysis.unbiasedness_test("alg1", [DeterministicSchedule((0, 4, 10))], [[1.0, -2.0]], [1.0],
                                   t=6, horizon=12, n_draws=50_000)
    assert r.passed


def test_naive_control_fails():
    r = analysis.naive_bias_control(n_draws=50_000)
    assert r.estimate[0] == pytest.approx(0.6, abs=0.01)
    assert not r.passed and r.ok


def test_variance_zero_when_always_participating():
    r = analysis.variance_term_check("alg1", [periodic_schedule(1, 5)] * 2, np.eye(2), [0.5, 0.5], t=2,
                                     horizon=5, n_draws=1000)
    assert r.estimate == 0.0 and r.target == 0.0 and r.passed


def test_variance_check_is_one_sided_bound():
    r = analysis.variance_term_check("best_effort", [Bernoulli(0.5), Bernoulli(0.25)], np.eye(2), [0.5, 0.5],
                                     t=0, horizon=1, n_draws=50_000, G=2.0)
    assert r.target == pytest.approx(4 * (0.25 * 1 + 0.25 * 3))
    assert r.passed


def test_report_json_shape():
    r = analysis.participation_probability_test((0, 3), 6, 1, n_draws=3000)
    d = r.to_dict()
    assert {"test", "estimate", "target", "stderr", "pass"} <= set(d)
    assert d["slots"] == [0, 1, 2]


def test_transient_rate_recovers_geometric_decay():
    t = np.arange(3000)
    curve = 100 * 0.8**t + 1e-3
    rate, window = transient_rate(curve)
    assert rate == pytest.approx(0.8, rel=1e-6)
    assert window[0] == 0 and window[1] > 3


def test_transient_rate_needs_transient():
    with pytest.raises(ValueError):
        transient_rate(np.ones(600))


def test_unknown_suite():
    with pytest.raises(KeyError):
        analysis.run_suite("nope")
