"""Energy-arrival models, their realization into binary traces, and inter-arrival bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np

from . import streams
from .exceptions import InvalidModel


@dataclass(frozen=True)
class DeterministicSchedule:
    """Arrivals at known iteration indices."""

    times: tuple[int, ...]

    kind = "deterministic"

    def __post_init__(self):
        times = tuple(int(t) for t in self.times)
        if any(t < 0 for t in times):
            raise InvalidModel("schedule times must be non-negative")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidModel("schedule times must be strictly increasing")
        object.__setattr__(self, "times", times)


@dataclass(frozen=True)
class Bernoulli:
    """Unit arrival at every iteration independently with probability ``beta``."""

    beta: float

    kind = "bernoulli"

    def __post_init__(self):
        beta = float(self.beta)
        if not (math.isfinite(beta) and 0.0 < beta <= 1.0):
            raise InvalidModel(f"beta must lie in (0, 1], got {self.beta!r}")
        object.__setattr__(self, "beta", beta)


@dataclass(frozen=True)
class UniformWindow:
    """One arrival at a uniformly random slot of every window [kT, (k+1)T)."""

    period: int

    kind = "uniform_window"

    def __post_init__(self):
        if isinstance(self.period, bool) or int(self.period) != self.period or self.period < 1:
            raise InvalidModel(f"period must be a positive integer, got {self.period!r}")
        object.__setattr__(self, "period", int(self.period))


ArrivalModel = Union[DeterministicSchedule, Bernoulli, UniformWindow]


def periodic_schedule(period: int, horizon: int, offset: int = 0) -> DeterministicSchedule:
    """Arrivals at ``offset, offset + period, ...`` below ``horizon``."""
    if period < 1:
        raise InvalidModel("period must be >= 1")
    return DeterministicSchedule(tuple(range(offset, horizon, period)))


def model_to_record(model: ArrivalModel) -> dict:
    if isinstance(model, DeterministicSchedule):
        return {"kind": model.kind, "times": list(model.times)}
    if isinstance(model, Bernoulli):
        return {"kind": model.kind, "beta": model.beta}
    if isinstance(model, UniformWindow):
        return {"kind": model.kind, "period": model.period}
    raise TypeError(f"not an arrival model: {model!r}")


def realize_arrivals(model: ArrivalModel, horizon: int, seed=0, user: int = 0) -> np.ndarray:
    """Binary arrival indicators E^t for t in [0, horizon).

    ``seed`` may be an int (returns shape ``(horizon,)``) or a 1-d array of
    per-replay seeds (returns ``(len(seed), horizon)``); row ``r`` is then the
    trace this user would see under master seed ``seed[r]``.
    """
    if horizon < 1:
        raise InvalidModel("horizon must be >= 1")
    seeds = np.asarray(seed)
    batched = seeds.ndim > 0
    col = seeds.reshape(-1, 1) if batched else seeds
    t = np.arange(horizon)

    if isinstance(model, DeterministicSchedule):
        if model.times and model.times[-1] >= horizon:
            raise InvalidModel(f"schedule time {model.times[-1]} outside horizon {horizon}")
        row = np.zeros(horizon, dtype=bool)
        row[list(model.times)] = True
        out = np.broadcast_to(row, (len(seeds), horizon)).copy() if batched else row
    elif isinstance(model, Bernoulli):
        out = streams.uniform(col, user, streams.ENERGY, t) < model.beta
    elif isinstance(model, UniformWindow):
        T = model.period
        n_windows = -(-horizon // T)
        k = np.arange(n_windows)
        pos = k * T + streams.integers(T, col, user, streams.ENERGY, k)
        shape = (len(seeds), horizon) if batched else (horizon,)
        out = np.zeros(shape, dtype=bool)
        inside = pos < horizon
        if batched:
            rows = np.broadcast_to(np.arange(len(seeds)).reshape(-1, 1), pos.shape)
            out[rows[inside], pos[inside]] = True
        else:
            out[pos[inside]] = True
    else:
        raise InvalidModel(f"unknown arrival model {model!r}")
    return np.asarray(out, dtype=bool)


def interval_bounds(arrivals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Most recent arrival at or before t, and first arrival after t.

    Works along the last axis. Missing previous arrivals are -1; a missing
    next arrival is reported as the horizon itself.
    """
    arrivals = np.asarray(arrivals, dtype=bool)
    horizon = arrivals.shape[-1]
    idx = np.arange(horizon)
    prev = np.maximum.accumulate(np.where(arrivals, idx, -1), axis=-1)
    at_or_after = np.flip(
        np.minimum.accumulate(np.flip(np.where(arrivals, idx, horizon), axis=-1), axis=-1), axis=-1
    )
    nxt = np.full_like(at_or_after, horizon)
    nxt[..., :-1] = at_or_after[..., 1:]
    return prev, nxt


def gaps(arrivals: np.ndarray) -> np.ndarray:
    """T^t for every t; 0 where no arrival has happened yet."""
    prev, nxt = interval_bounds(arrivals)
    return np.where(prev >= 0, nxt - prev, 0)


@dataclass(frozen=True)
class InterArrival:
    prev: Optional[int]
    next: int
    next_is_horizon: bool

    @property
    def gap(self) -> Optional[int]:
        return None if self.prev is None else self.next - self.prev


@dataclass(frozen=True)
class EnergyTrace:
    user_id: int
    arrivals: np.ndarray = field(repr=False)

    @property
    def horizon(self) -> int:
        return len(self.arrivals)

    @cached_property
    def _bounds(self):
        return interval_bounds(self.arrivals)

    def inter_arrival(self, t: int) -> InterArrival:
        return inter_arrival(self, t)


def realize_trace(model: ArrivalModel, horizon: int, seed: int = 0, user: int = 0) -> EnergyTrace:
    return EnergyTrace(user, realize_arrivals(model, horizon, seed, user))


def inter_arrival(trace: EnergyTrace, t: int) -> InterArrival:
    if not 0 <= t < trace.horizon:
        raise IndexError(f"t={t} outside [0, {trace.horizon})")
    prev, nxt = trace._bounds
    p = int(prev[t])
    n = int(nxt[t])
    return InterArrival(None if p < 0 else p, n, n == trace.horizon)
