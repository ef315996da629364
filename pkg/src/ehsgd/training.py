"""Discrete-time distributed SGD over energy-harvesting users."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .energy import ArrivalModel, realize_arrivals
from .exceptions import DimensionMismatch, PremiseViolated, StarvationDetected
from .objective import Objective, SyntheticSpec, make_synthetic
from .scheduling import WaitForAll, make_policy, simulate_participation

CSV_HEADER = ("iteration", "global_loss", "loss_gap", "num_participants", "energy_spent", "energy_wasted")


@dataclass(frozen=True)
class LearningRate:
    """eta_t = eta0 / (1 + decay * t); ``decay=0`` is a constant rate."""

    eta0: float
    decay: float = 0.0

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ValueError("eta0 must be positive")
        if self.decay < 0:
            raise ValueError("decay must be non-negative")

    @property
    def constant(self) -> bool:
        return self.decay == 0.0


def learning_rate(schedule: LearningRate, t: int) -> float:
    if schedule.constant:
        return schedule.eta0
    return schedule.eta0 / (1.0 + schedule.decay * t)


def max_stable_rate(mu: float, L: float) -> float:
    return min(1.0 / (2.0 * mu), 1.0 / L)


@dataclass
class RunConfig:
    n_users: int
    horizon: int
    policy: str
    objective: Union[SyntheticSpec, Objective]
    arrivals: Optional[Sequence[ArrivalModel]] = None
    lr: LearningRate = field(default_factory=lambda: LearningRate(0.1))
    seed: int = 0
    metric_every: int = 1
    check_bound: bool = False
    n_groups: int = 1
    ball_radius: float = 1.0
    w0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.metric_every < 1:
            raise ValueError("metric_every must be >= 1")
        if self.n_groups < 1:
            raise ValueError("n_groups must be >= 1")
        if self.arrivals is None:
            if self.policy != "full":
                raise ValueError(f"policy {self.policy!r} needs arrival models")
        else:
            self.arrivals = tuple(self.arrivals)
            if len(self.arrivals) != self.n_users:
                raise ValueError(f"expected {self.n_users} arrival models, got {len(self.arrivals)}")
        make_policy(self.policy, self.arrivals or ())

    def build_objective(self) -> Objective:
        if isinstance(self.objective, Objective):
            obj = self.objective
        else:
            obj = make_synthetic(self.objective, self.seed)
        if obj.n_users != self.n_users:
            raise ValueError(f"objective has {obj.n_users} users, config says {self.n_users}")
        return obj


@dataclass
class ContributionBatch:
    """Scaled local gradients collected at one iteration."""

    t: int
    users: np.ndarray
    p: np.ndarray
    gamma: np.ndarray
    grads: np.ndarray

    def __len__(self):
        return len(self.users)


def server_update(w: np.ndarray, batch: ContributionBatch, eta: float) -> np.ndarray:
    """w - eta * sum_{i in S_t} p_i gamma_i g_i; an empty batch leaves w unchanged."""
    w = np.asarray(w, dtype=float)
    if len(batch) == 0:
        return w.copy()
    grads = np.asarray(batch.grads, dtype=float)
    if grads.ndim != 2 or grads.shape[1] != w.shape[0]:
        raise DimensionMismatch(f"gradients of shape {grads.shape} for a model of size {w.shape[0]}")
    coef = np.asarray(batch.p) * np.asarray(batch.gamma)
    step = (coef[:, None] * grads).sum(axis=0)
    return w - eta * step


@dataclass
class MetricsTrace:
    """Recorded series of one run.

    Row ``k`` describes iteration ``iterations[k]``: the number of users that
    contributed at that iteration and the loss of the model *after* its update.
    Energy counters are cumulative through that iteration.
    """

    iterations: np.ndarray
    global_loss: np.ndarray
    loss_gap: np.ndarray
    num_participants: np.ndarray
    energy_spent: np.ndarray
    energy_wasted: np.ndarray
    group_participation: np.ndarray
    initial_loss: float
    optimum_loss: float
    final_w: np.ndarray
    n_gradient_evals: int
    n_updates: int
    participation: Optional[np.ndarray] = None
    arrivals: Optional[np.ndarray] = None
    battery: Optional[np.ndarray] = None
    iterates: Optional[np.ndarray] = None

    @property
    def initial_gap(self) -> float:
        return self.initial_loss - self.optimum_loss

    @property
    def final_loss(self) -> float:
        return float(self.global_loss[-1])

    @property
    def final_gap(self) -> float:
        return float(self.loss_gap[-1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in zip(self.iterations, self.global_loss, self.loss_gap, self.num_participants,
                       self.energy_spent, self.energy_wasted):
            t, f, gap, k, spent, wasted = row
            writer.writerow([int(t), repr(float(f)), repr(float(gap)), int(k), int(spent), int(wasted)])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def summary(self) -> dict:
        return {
            "initial_loss": self.initial_loss,
            "optimum_loss": self.optimum_loss,
            "final_loss": self.final_loss,
            "final_gap": self.final_gap,
            "n_gradient_evals": self.n_gradient_evals,
            "n_updates": self.n_updates,
            "energy_spent": int(self.energy_spent[-1]),
            "energy_wasted": int(self.energy_wasted[-1]),
            "group_participation": [int(v) for v in self.group_participation[-1]],
            "final_w": [float(v) for v in self.final_w],
        }


def run(config: RunConfig, objective: Optional[Objective] = None, *,
        record_participation: bool = False, record_iterates: bool = False,
        track_gap: bool = True) -> MetricsTrace:
    """Simulate ``config.horizon`` iterations and return the recorded metrics.

    Scheduling uses the per-user scheduling stream and gradient sampling the
    per-user data stream, both keyed by the master seed and the iteration, so
    the run is a deterministic function of the config.
    ``record_iterates`` keeps w^(t+1) for every t (a horizon x d array).
    With ``track_gap=False`` the optimum is never solved for and gaps are NaN.
    """
    obj = objective if objective is not None else config.build_objective()
    n, T = config.n_users, config.horizon
    f_star = obj.solve_optimum()[1] if track_gap else float("nan")

    if config.check_bound:
        if not config.lr.constant:
            raise PremiseViolated("bound checking requires a constant learning rate")
        mu, L = obj.curvature()
        if config.lr.eta0 > max_stable_rate(mu, L):
            raise PremiseViolated(
                f"eta={config.lr.eta0} exceeds min(1/(2 mu), 1/L)={max_stable_rate(mu, L)}")

    policy = make_policy(config.policy, config.arrivals or ())
    if config.arrivals is None:
        arrivals = np.zeros((n, T), dtype=bool)
    else:
        arrivals = np.vstack([realize_arrivals(m, T, config.seed, i) for i, m in enumerate(config.arrivals)])
    users = np.arange(n)
    record = simulate_participation(policy, arrivals, users, config.seed)
    if isinstance(policy, WaitForAll) and record.n_updates == 0:
        raise StarvationDetected(
            f"wait_for_all: no instant within {T} iterations where all {n} batteries were full")

    w = np.zeros(obj.dim) if config.w0 is None else np.array(config.w0, dtype=float)
    if w.shape != (obj.dim,):
        raise DimensionMismatch(f"w0 has shape {w.shape}, objective dimension is {obj.dim}")
    initial_loss = obj.global_loss(w)
    groups = users % config.n_groups

    rows = [t for t in range(T) if (t + 1) % config.metric_every == 0 or t == T - 1]
    n_rows = len(rows)
    losses = np.empty(n_rows)
    counts = np.empty(n_rows, dtype=np.int64)
    group_counts = np.empty((n_rows, config.n_groups), dtype=np.int64)
    cum_part = np.cumsum(record.alpha.sum(axis=0))
    cum_group = np.zeros(config.n_groups, dtype=np.int64)
    cum_wasted = np.cumsum(record.wasted.sum(axis=0))

    sample_idx = obj.sample_index_table(config.seed, T)
    iterates = np.empty((T, obj.dim)) if record_iterates else None
    k = 0
    n_evals = 0
    for t in range(T):
        part = np.flatnonzero(record.alpha[:, t])
        if len(part):
            grads = obj.point_gradients(part, w, sample_idx[part, t])
            n_evals += len(part)
            batch = ContributionBatch(t, part, obj.weights[part], record.gamma[part, t], grads)
            w = server_update(w, batch, learning_rate(config.lr, t))
            cum_group += np.bincount(groups[part], minlength=config.n_groups)
        if iterates is not None:
            iterates[t] = w
        if k < n_rows and rows[k] == t:
            losses[k] = obj.global_loss(w)
            counts[k] = len(part)
            group_counts[k] = cum_group
            k += 1

    rows = np.array(rows, dtype=np.int64)
    return MetricsTrace(
        iterations=rows,
        global_loss=losses,
        loss_gap=losses - f_star,
        num_participants=counts,
        energy_spent=cum_part[rows],
        energy_wasted=cum_wasted[rows],
        group_participation=group_counts,
        initial_loss=initial_loss,
        optimum_loss=f_star,
        final_w=w,
        n_gradient_evals=n_evals,
        n_updates=record.n_updates,
        participation=record.alpha if record_participation else None,
        arrivals=arrivals if record_participation else None,
        battery=record.battery if record_participation else None,
        iterates=iterates,
    )
