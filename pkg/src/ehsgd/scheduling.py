"""Participation decisions under a unit battery.

State is kept per *lane*. In a training run a lane is a user; the Monte Carlo
verifiers stack many independent replays of the same users into one batch,
so every policy operates on numpy arrays of lanes. A ``cohort`` groups the
lanes that share one server (the users of one replay), which is what
wait-for-all synchronizes over.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import streams
from .energy import Bernoulli, DeterministicSchedule, UniformWindow, gaps
from .exceptions import IncompatiblePolicy, MissingGap, SchedulingError

NO_SLOT = -1


@dataclass
class EnergyState:
    """Battery and pending-slot state for a batch of lanes."""

    users: np.ndarray
    seeds: np.ndarray
    cohorts: np.ndarray
    battery: np.ndarray
    pending_slot: np.ndarray
    pending_weight: np.ndarray

    @classmethod
    def fresh(cls, users, seeds, cohorts=None) -> "EnergyState":
        users = np.asarray(users, dtype=np.int64)
        n = len(users)
        seeds = np.broadcast_to(np.asarray(seeds, dtype=np.uint64), (n,)).copy()
        cohorts = np.zeros(n, dtype=np.int64) if cohorts is None else np.asarray(cohorts, dtype=np.int64)
        return cls(users, seeds, cohorts,
                   battery=np.zeros(n, dtype=np.int8),
                   pending_slot=np.full(n, NO_SLOT, dtype=np.int64),
                   pending_weight=np.zeros(n))

    def __len__(self):
        return len(self.users)


@dataclass
class ParticipationDecision:
    participates: np.ndarray
    weight: np.ndarray


class SchedulerPolicy:
    name = ""
    requires: tuple = ()
    metered = True

    def __init__(self, models: Sequence):
        self.models = tuple(models)
        if self.requires:
            for i, m in enumerate(self.models):
                if not isinstance(m, self.requires):
                    allowed = ", ".join(k.kind for k in self.requires)
                    raise IncompatiblePolicy(
                        f"policy {self.name!r} needs {allowed} arrivals; user {i} has {type(m).__name__}")

    def on_energy(self, state: EnergyState, t: int, arrived: np.ndarray,
                  gap: Optional[np.ndarray] = None, draws: Optional[np.ndarray] = None) -> np.ndarray:
        """Charge lanes with an arrival at ``t``; returns the mask of wasted arrivals.

        ``gap`` is T^t per lane; ``draws`` are the lanes' scheduling-stream
        uniforms for iteration ``t`` (computed on demand when omitted).
        """
        wasted = arrived & (state.battery == 1)
        state.battery[arrived] = 1
        return wasted

    def decide(self, state: EnergyState, t: int, arrived: np.ndarray) -> ParticipationDecision:
        raise NotImplementedError

    def _spend(self, state, part, weight):
        state.battery[part] = 0
        return ParticipationDecision(part, np.where(part, weight, 0.0))


class UniformSlot(SchedulerPolicy):
    """On each arrival pick J uniform on {0..T-1}, participate at t + J with weight T."""

    name = "alg1"
    requires = (DeterministicSchedule,)

    def on_energy(self, state, t, arrived, gap=None, draws=None):
        wasted = super().on_energy(state, t, arrived)
        lanes = np.flatnonzero(arrived)
        if not len(lanes):
            return wasted
        if gap is None or np.any(gap[lanes] < 1):
            raise MissingGap(f"no inter-arrival gap at t={t}")
        if np.any(state.pending_slot[lanes] != NO_SLOT):
            raise SchedulingError(f"unconsumed participation slot overwritten at t={t}")
        T = gap[lanes]
        if draws is None:
            u = streams.uniform(state.seeds[lanes], state.users[lanes], streams.SCHEDULE, t)
        else:
            u = draws[lanes]
        J = streams.scale_to_int(u, T)
        state.pending_slot[lanes] = t + J
        state.pending_weight[lanes] = T
        return wasted

    def decide(self, state, t, arrived):
        part = state.pending_slot == t
        weight = state.pending_weight.copy()
        state.pending_slot[part] = NO_SLOT
        state.pending_weight[part] = 0.0
        return self._spend(state, part, weight)


def best_effort_weight(model) -> float:
    if isinstance(model, Bernoulli):
        return 1.0 / model.beta
    if isinstance(model, UniformWindow):
        return float(model.period)
    raise IncompatiblePolicy(f"best-effort scaling undefined for {type(model).__name__}")


class BestEffort(SchedulerPolicy):
    """Participate on arrival, scaled by 1/beta (Bernoulli) or T (uniform windows)."""

    name = "best_effort"
    requires = (Bernoulli, UniformWindow)

    def __init__(self, models):
        super().__init__(models)
        self.user_weight = np.array([best_effort_weight(m) for m in self.models])

    def decide(self, state, t, arrived):
        part = arrived & (state.battery == 1)
        return self._spend(state, part, self.user_weight[state.users])


class NaiveUnscaled(SchedulerPolicy):
    """Participate on arrival, no scaling."""

    name = "naive"

    def decide(self, state, t, arrived):
        part = arrived & (state.battery == 1)
        return self._spend(state, part, 1.0)


class WaitForAll(SchedulerPolicy):
    """Update only when every lane of the cohort holds energy; all drain together."""

    name = "wait_for_all"

    def decide(self, state, t, arrived):
        full = (state.battery == 1).astype(np.int64)
        n_cohorts = int(state.cohorts.max()) + 1 if len(state) else 0
        counts = np.bincount(state.cohorts, minlength=n_cohorts)
        charged = np.bincount(state.cohorts, weights=full, minlength=n_cohorts)
        part = (charged == counts)[state.cohorts]
        return self._spend(state, part, 1.0)


class FullParticipation(SchedulerPolicy):
    """Every user every round; energy is not metered."""

    name = "full"
    metered = False

    def on_energy(self, state, t, arrived, gap=None, draws=None):
        return np.zeros(len(state), dtype=bool)

    def decide(self, state, t, arrived):
        n = len(state)
        return ParticipationDecision(np.ones(n, dtype=bool), np.ones(n))


POLICIES = {cls.name: cls for cls in (UniformSlot, BestEffort, NaiveUnscaled, WaitForAll, FullParticipation)}


def make_policy(name: str, models: Sequence) -> SchedulerPolicy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise IncompatiblePolicy(f"unknown policy {name!r}; expected one of {sorted(POLICIES)}") from None
    return cls(models)


@dataclass
class ParticipationRecord:
    """Lanes x horizon matrices produced by :func:`simulate_participation`."""

    alpha: np.ndarray
    gamma: np.ndarray
    wasted: np.ndarray
    battery: np.ndarray

    @property
    def n_updates(self) -> int:
        return int(self.alpha.any(axis=0).sum())


def simulate_participation(policy: SchedulerPolicy, arrivals: np.ndarray, users, seeds,
                           cohorts=None) -> ParticipationRecord:
    """Run the battery/scheduling state machine over a whole horizon.

    Decisions never depend on the model, so the full participation pattern
    can be produced ahead of (or independently from) the gradient updates.
    ``arrivals`` has one row per lane.
    """
    arrivals = np.asarray(arrivals, dtype=bool)
    n, horizon = arrivals.shape
    state = EnergyState.fresh(users, seeds, cohorts)
    gap = draws = None
    if isinstance(policy, UniformSlot):
        gap = gaps(arrivals)
        draws = streams.uniform(state.seeds[:, None], state.users[:, None], streams.SCHEDULE,
                                np.arange(horizon))
    alpha = np.zeros((n, horizon), dtype=bool)
    gamma = np.zeros((n, horizon))
    wasted = np.zeros((n, horizon), dtype=bool)
    battery = np.zeros((n, horizon), dtype=np.int8)
    for t in range(horizon):
        arrived = arrivals[:, t]
        if gap is None:
            wasted[:, t] = policy.on_energy(state, t, arrived)
        else:
            wasted[:, t] = policy.on_energy(state, t, arrived, gap[:, t], draws[:, t])
        decision = policy.decide(state, t, arrived)
        if np.any(state.battery > 1) or np.any(state.battery < 0):
            raise SchedulingError(f"battery outside {{0, 1}} at t={t}")
        alpha[:, t] = decision.participates
        gamma[:, t] = decision.weight
        battery[:, t] = state.battery
    return ParticipationRecord(alpha, gamma, wasted, battery)
