"""Convergence-bound machinery and Monte Carlo verifiers for the scheduling rules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import streams
from .energy import Bernoulli, DeterministicSchedule, UniformWindow, gaps, periodic_schedule, realize_arrivals
from .exceptions import InvalidWeights, PremiseViolated
from .scheduling import make_policy, simulate_participation

N_SIGMA = 3.0
_CHUNK_LANES = 100_000


def _check_weights(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidWeights(f"weights must be a non-negative vector summing to 1 (sum={p.sum()!r})")
    return p


def compute_C(p, t_max, G: float) -> float:
    """(sum_i (T_i,max - 1) p_i^2 + sum_i sum_j p_i p_j) G^2."""
    p = _check_weights(p)
    t_max = np.asarray(t_max, dtype=float)
    if t_max.shape != p.shape:
        raise InvalidWeights("p and t_max lengths differ")
    if np.any(t_max < 1):
        raise ValueError("T_max entries must be >= 1")
    return float(((t_max - 1.0) @ (p * p) + double_sum(p)) * G * G)


def double_sum(p) -> float:
    """sum_i sum_j p_i p_j, evaluated term by term (equals 1 on the simplex)."""
    p = np.asarray(p, dtype=float)
    return float(np.outer(p, p).sum())


def t_max_from_trace(arrivals) -> np.ndarray:
    """Largest realized inter-arrival gap over [0, T), per row."""
    g = gaps(np.atleast_2d(arrivals))
    return g.max(axis=1)


def t_max_for_model(model, horizon: int, seed: int = 0, user: int = 0) -> float:
    """T_max for the bound: realized maximum gap, or 1/beta and T per the stochastic substitutions."""
    if isinstance(model, Bernoulli):
        return 1.0 / model.beta
    if isinstance(model, UniformWindow):
        return float(model.period)
    return float(t_max_from_trace(realize_arrivals(model, horizon, seed, user))[0])


@dataclass(frozen=True)
class BoundInputs:
    mu: float
    L: float
    eta: float
    T: int
    initial_gap: float
    p: Sequence[float]
    t_max: Sequence[float]
    G: float

    @property
    def C(self) -> float:
        return compute_C(self.p, self.t_max, self.G)


def check_premise(mu: float, L: float, eta: float) -> None:
    if not 0 < mu <= L:
        raise PremiseViolated(f"need 0 < mu <= L, got mu={mu}, L={L}")
    if eta > min(1.0 / (2.0 * mu), 1.0 / L):
        raise PremiseViolated(f"eta={eta} exceeds min(1/(2 mu), 1/L)")


def geometric_term(inputs: BoundInputs, C: Optional[float] = None) -> float:
    C = inputs.C if C is None else C
    rate = 1.0 - inputs.eta * inputs.mu
    return inputs.L / inputs.mu * rate**inputs.T * (inputs.initial_gap - inputs.eta * C / 2.0)


def convergence_bound(inputs: BoundInputs) -> float:
    """Upper bound on E[F(w^T)] - F* for a constant learning rate. Not clamped at zero."""
    check_premise(inputs.mu, inputs.L, inputs.eta)
    C = inputs.C
    return geometric_term(inputs, C) + inputs.eta * inputs.L * C / (2.0 * inputs.mu)


@dataclass
class VerifierReport:
    test: str
    estimate: object
    target: object
    stderr: object
    passed: bool
    negative_control: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        """True when the report came out the way a healthy verifier should."""
        return self.passed != self.negative_control

    def to_dict(self) -> dict:
        out = {"test": self.test, "estimate": _plain(self.estimate), "target": _plain(self.target),
               "stderr": _plain(self.stderr), "pass": bool(self.passed)}
        if self.negative_control:
            out["negative_control"] = True
        out.update({k: _plain(v) for k, v in self.extra.items()})
        return out


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


def draw_participation(policy: str, models: Sequence, horizon: int, t: int,
                       n_draws: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Participation indicators and weights of every user at iteration ``t``.

    Each of the ``n_draws`` replays runs the real scheduler over ``horizon``
    iterations under its own derived master seed; stochastic arrival models
    are re-realized per replay. Returns two ``(n_draws, N)`` arrays.
    """
    n = len(models)
    pol = make_policy(policy, models)
    alpha = np.empty((n_draws, n), dtype=bool)
    gamma = np.empty((n_draws, n))
    per_chunk = max(1, _CHUNK_LANES // max(n, 1))
    for start in range(0, n_draws, per_chunk):
        stop = min(n_draws, start + per_chunk)
        replay_seeds = streams.derive_seed(seed, np.arange(start, stop, dtype=np.int64))
        m = stop - start
        arrivals = np.empty((m, n, horizon), dtype=bool)
        for i, model in enumerate(models):
            arrivals[:, i, :] = realize_arrivals(model, horizon, replay_seeds, i)
        users = np.tile(np.arange(n), m)
        lane_seeds = np.repeat(replay_seeds, n)
        cohorts = np.repeat(np.arange(m), n)
        record = simulate_participation(pol, arrivals.reshape(m * n, horizon), users, lane_seeds, cohorts)
        alpha[start:stop] = record.alpha[:, t].reshape(m, n)
        gamma[start:stop] = record.gamma[:, t].reshape(m, n)
    return alpha, gamma


def _scaled_aggregate(alpha, gamma, p, grads):
    return (alpha * gamma * p) @ grads


def unbiasedness_test(policy: str, models: Sequence, grads, p, *, t: int, horizon: int,
                      n_draws: int = 200_000, seed: int = 0, name: Optional[str] = None,
                      negative_control: bool = False) -> VerifierReport:
    """Componentwise mean of sum_{i in S} p_i gamma_i g_i against sum_i p_i g_i."""
    grads = np.atleast_2d(np.asarray(grads, dtype=float))
    p = _check_weights(p)
    alpha, gamma = draw_participation(policy, models, horizon, t, n_draws, seed)
    agg = _scaled_aggregate(alpha, gamma, p, grads)
    mean = agg.mean(axis=0)
    se = agg.std(axis=0, ddof=1) / np.sqrt(n_draws)
    target = p @ grads
    passed = bool(np.all(np.abs(mean - target) <= N_SIGMA * se + 1e-12))
    return VerifierReport(name or f"unbiasedness/{policy}", mean, target, se, passed, negative_control)


def variance_term(policy: str, models: Sequence, grads, p, *, t: int, horizon: int,
                  n_draws: int = 200_000, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo mean and standard error of ||sum_{i in S} p_i gamma_i g_i - sum_i p_i g_i||^2."""
    grads = np.atleast_2d(np.asarray(grads, dtype=float))
    p = _check_weights(p)
    alpha, gamma = draw_participation(policy, models, horizon, t, n_draws, seed)
    dev = _scaled_aggregate(alpha, gamma, p, grads) - p @ grads
    sq = (dev * dev).sum(axis=1)
    return float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(n_draws))


def variance_bound(models: Sequence, p, G: float, horizon: int) -> float:
    """sum_i p_i^2 (T_i,max - 1) G^2."""
    p = _check_weights(p)
    t_max = np.array([t_max_for_model(m, horizon, user=i) for i, m in enumerate(models)])
    return float(((t_max - 1.0) @ (p * p)) * G * G)


def variance_term_check(policy: str, models: Sequence, grads, p, *, t: int, horizon: int,
                        n_draws: int = 200_000, seed: int = 0, G: Optional[float] = None,
                        name: Optional[str] = None) -> VerifierReport:
    """Pass iff the Monte Carlo variance term stays below its bound plus 3 standard errors."""
    grads = np.atleast_2d(np.asarray(grads, dtype=float))
    if G is None:
        G = float(np.sqrt((grads * grads).sum(axis=1).max()))
    estimate, se = variance_term(policy, models, grads, p, t=t, horizon=horizon, n_draws=n_draws, seed=seed)
    bound = variance_bound(models, p, G, horizon)
    passed = estimate <= bound + N_SIGMA * se + 1e-12
    return VerifierReport(name or f"variance/{policy}", estimate, bound, se, passed)


def slot_frequencies(times: Sequence[int], horizon: int, t: int, n_draws: int = 100_000,
                     seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Empirical participation frequency of each slot of the interval containing ``t``.

    Returns the slot indices and their frequencies for a single user scheduled
    by uniform-slot selection on the given deterministic arrival times.
    """
    model = DeterministicSchedule(tuple(times))
    arrivals = realize_arrivals(model, horizon)
    prev = int(np.flatnonzero(arrivals[: t + 1])[-1])
    gap = int(gaps(arrivals)[t])
    slots = np.arange(prev, prev + gap)
    hits = np.zeros(gap)
    pol = make_policy("alg1", [model])
    for start in range(0, n_draws, _CHUNK_LANES):
        stop = min(n_draws, start + _CHUNK_LANES)
        seeds = streams.derive_seed(seed, np.arange(start, stop, dtype=np.int64))
        lanes = np.broadcast_to(arrivals, (stop - start, horizon))
        record = simulate_participation(pol, lanes, np.zeros(stop - start, dtype=np.int64), seeds,
                                        np.arange(stop - start))
        hits += record.alpha[:, slots].sum(axis=0)
    return slots, hits / n_draws


def participation_probability_test(times: Sequence[int], horizon: int, t: int,
                                   n_draws: int = 100_000, seed: int = 0) -> VerifierReport:
    """Every slot of a deterministic interval of length T is hit with probability 1/T."""
    slots, freq = slot_frequencies(times, horizon, t, n_draws, seed)
    target = 1.0 / len(slots)
    se = np.sqrt(target * (1 - target) / n_draws)
    passed = bool(np.all(np.abs(freq - target) <= N_SIGMA * se + 1e-12))
    return VerifierReport(f"participation/T={len(slots)}", freq, target, se, passed,
                          extra={"slots": slots})


# ---------------------------------------------------------------------------
# Standard verifier instances


def _frozen_gradients(n: int, d: int, seed: int) -> np.ndarray:
    return streams.generator(seed, "frozen-gradients").standard_normal((n, d))


def _weights(n: int, seed: int) -> np.ndarray:
    raw = streams.generator(seed, "frozen-weights").uniform(0.5, 1.5, n)
    return raw / raw.sum()


def unbiasedness_suite(n_draws: int = 200_000, seed: int = 0, controls: bool = True) -> list[VerifierReport]:
    """One test per scaling rule (N=5, d=8), plus the unscaled negative control."""
    n, d = 5, 8
    grads = _frozen_gradients(n, d, seed)
    p = _weights(n, seed)
    periods = (2, 3, 4, 6, 7)
    horizon = 3 * max(periods)
    t = max(periods) + 3
    deterministic = [periodic_schedule(T, horizon) for T in periods]
    bernoulli = [Bernoulli(b) for b in (1.0, 0.5, 0.3, 0.2, 0.1)]
    windows = [UniformWindow(T) for T in periods]
    reports = [
        unbiasedness_test("alg1", deterministic, grads, p, t=t, horizon=horizon, n_draws=n_draws,
                          seed=seed, name="unbiasedness/alg1"),
        unbiasedness_test("best_effort", bernoulli, grads, p, t=t, horizon=horizon, n_draws=n_draws,
                          seed=seed, name="unbiasedness/best_effort-bernoulli"),
        unbiasedness_test("best_effort", windows, grads, p, t=t, horizon=horizon, n_draws=n_draws,
                          seed=seed, name="unbiasedness/best_effort-uniform"),
    ]
    if controls:
        reports.append(naive_bias_control(n_draws=n_draws, seed=seed))
    return reports


def naive_bias_control(n_draws: int = 200_000, seed: int = 0) -> VerifierReport:
    """Unscaled participation with beta=(1, 0.2): mean 0.6 against target 1, must fail."""
    return unbiasedness_test("naive", [Bernoulli(1.0), Bernoulli(0.2)], np.ones((2, 1)), [0.5, 0.5],
                             t=0, horizon=1, n_draws=n_draws, seed=seed,
                             name="unbiasedness/naive-control", negative_control=True)


def participation_suite(n_draws: int = 100_000, seed: int = 0) -> list[VerifierReport]:
    return [participation_probability_test((0, 4, 10), 12, 5, n_draws, seed)]


def variance_suite(n_draws: int = 200_000, seed: int = 0) -> list[VerifierReport]:
    g1 = np.array([[1.0]])
    single = variance_term_check("alg1", [DeterministicSchedule((0, 4))], g1, [1.0], t=1, horizon=8,
                                 n_draws=n_draws, seed=seed, name="variance/alg1-N1-T4")
    mixed = variance_term_check("best_effort", [Bernoulli(0.5), Bernoulli(0.25)],
                                np.array([[1.0, 0.0], [0.0, 1.0]]), [0.5, 0.5], t=0, horizon=1,
                                n_draws=n_draws, seed=seed, name="variance/bernoulli-mixed")
    return [single, mixed]


def quadratic_bound_instance(seed: int = 0):
    """Quadratic problem, N=10, d=5, one point per user, alg1 with periods in 1..8."""
    from .objective import SyntheticSpec, make_synthetic

    spec = SyntheticSpec(kind="quadratic", n_users=10, dim=5, points_per_user=1, mode="iid",
                         offset=10.0, seed=seed)
    periods = (1, 2, 3, 4, 5, 6, 7, 8, 3, 5)
    return make_synthetic(spec), periods


def bound_check(n_seeds: int = 200, horizon: int = 2000, eta: float = 0.25, seed: int = 0,
                rate_tolerance: float = 0.10) -> list[VerifierReport]:
    """End-to-end check of the constant-rate bound on the quadratic instance.

    Returns two reports: final mean gap against the bound (+3 standard
    errors), and the fitted per-step decay of the mean gap during the
    transient against the bound's contraction factor (1 - eta mu).
    """
    from .training import LearningRate, RunConfig, run

    obj, periods = quadratic_bound_instance(seed)
    n = obj.n_users
    models = [periodic_schedule(T, horizon) for T in periods]
    w_star, f_star = obj.solve_optimum()
    w0 = np.zeros(obj.dim)
    radius = float(np.linalg.norm(w0 - w_star))
    consts = obj.estimate_constants(ball_radius=radius, seed=seed)

    curves = np.empty((n_seeds, horizon + 1))
    for k in range(n_seeds):
        cfg = RunConfig(n, horizon, "alg1", obj, models, LearningRate(eta), seed=seed + k, check_bound=True)
        trace = run(cfg, obj)
        curves[k, 0] = trace.initial_gap
        curves[k, 1:] = trace.loss_gap

    t_max = [t_max_for_model(m, horizon, user=i) for i, m in enumerate(models)]
    inputs = BoundInputs(consts.mu, consts.L, eta, horizon, float(curves[0, 0]), obj.weights, t_max, consts.G)
    bound = convergence_bound(inputs)
    final = curves[:, -1]
    mean_final = float(final.mean())
    se_final = float(final.std(ddof=1) / np.sqrt(n_seeds))
    report_bound = VerifierReport("bound/final-gap", mean_final, bound, se_final,
                                  mean_final <= bound + N_SIGMA * se_final,
                                  extra={"C": inputs.C, "G": consts.G, "ball_radius": radius})

    mean_curve = curves.mean(axis=0)
    rate, window = transient_rate(mean_curve)
    contraction = 1.0 - eta * consts.mu
    # Identity Hessian and unbiased aggregation: E[w - w*] shrinks by exactly
    # (1 - eta mu) per step, so the transient of the mean gap goes as its square.
    exact = contraction**2
    not_slower = rate <= contraction * (1.0 + rate_tolerance)
    matches = abs(rate - exact) <= rate_tolerance * exact
    report_rate = VerifierReport("bound/transient-rate", rate, contraction, None, not_slower and matches,
                                 extra={"window": window, "tolerance": rate_tolerance,
                                        "exact_rate": exact})
    return [report_bound, report_rate]


def transient_rate(mean_curve, floor_factor: float = 10.0, tail: int = 500) -> tuple[float, list]:
    """Per-step geometric rate of the mean gap while the geometric term dominates.

    The stationary level is the average over the last ``tail`` steps. The fit
    is a least-squares line through log(gap - level) over the leading window
    in which the gap stays above ``floor_factor`` times that level.
    """
    mean_curve = np.asarray(mean_curve, dtype=float)
    floor = float(mean_curve[-tail:].mean())
    above = mean_curve > floor_factor * floor
    end = int(np.argmin(above)) if not above.all() else len(mean_curve)
    if end < 3:
        raise ValueError("transient too short to fit a rate")
    t = np.arange(end)
    slope = np.polyfit(t, np.log(mean_curve[:end] - floor), 1)[0]
    return float(np.exp(slope)), [0, end]


SUITES = {
    "unbiasedness": unbiasedness_suite,
    "participation": participation_suite,
    "variance": variance_suite,
    "bound": bound_check,
}


def run_suite(name: str) -> list[VerifierReport]:
    if name == "all":
        return [r for fn in SUITES.values() for r in fn()]
    return SUITES[name]()
