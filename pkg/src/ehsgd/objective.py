"""Per-user datasets, losses, gradients and optimum computation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from . import streams
from .exceptions import DimensionMismatch, InvalidSpec, NonConvergence

OPTIMUM_TOL = 1e-10
MAX_SOLVER_STEPS = 1_000_000
G_SAFETY = 1.1


class QuadraticLoss:
    """l(w, x) = 0.5 * ||w - x||^2; labels are ignored."""

    name = "quadratic"

    def values(self, w, X, y):
        diff = w - X
        return 0.5 * (diff * diff).sum(axis=1)

    def gradients(self, w, X, y):
        return w - X

    def curvature(self, X):
        return 1.0, 1.0

    def to_record(self):
        return {"kind": self.name}


@dataclass(frozen=True)
class LogisticLoss:
    """l(w, (x, y)) = log(1 + exp(-y w.x)) + (l2 / 2) ||w||^2 with y in {-1, +1}."""

    l2: float

    name = "logistic"

    def __post_init__(self):
        if not self.l2 > 0:
            raise InvalidSpec("logistic loss needs l2 > 0 for strong convexity")

    def values(self, w, X, y):
        margin = y * (X * w).sum(axis=1)
        return np.logaddexp(0.0, -margin) + 0.5 * self.l2 * float(w @ w)

    def gradients(self, w, X, y):
        margin = y * (X * w).sum(axis=1)
        coef = -y * expit(-margin)
        return coef[:, None] * X + self.l2 * w

    def curvature(self, X):
        # Hessian of the data term is X^T diag(s(1-s)) X / n with s(1-s) <= 1/4.
        second_moment = X.T @ X / len(X)
        top = float(np.linalg.eigvalsh(second_moment)[-1])
        return self.l2, self.l2 + top / 4.0

    def to_record(self):
        return {"kind": self.name, "l2": self.l2}


@dataclass(frozen=True)
class LocalDataset:
    user_id: int
    X: np.ndarray = field(repr=False)
    y: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return len(self.X)


@dataclass(frozen=True)
class ProblemConstants:
    mu: float
    L: float
    G: float
    sigma: float
    ball_radius: float

    def to_dict(self):
        return {"mu": self.mu, "L": self.L, "G": self.G, "sigma": self.sigma,
                "ball_radius": self.ball_radius}


class Objective:
    """F(w) = sum_i p_i F_i(w) with p_i = D_i / D.

    Data are kept pooled (rows grouped by user) so losses and gradients for
    many users can be evaluated in one vectorized pass.
    """

    def __init__(self, datasets: Sequence[LocalDataset], loss=None):
        if not datasets:
            raise InvalidSpec("need at least one user")
        self.loss = loss if loss is not None else QuadraticLoss()
        self.datasets = tuple(datasets)
        dims = {ds.X.shape[1] for ds in self.datasets}
        if len(dims) != 1:
            raise DimensionMismatch(f"users disagree on feature dimension: {sorted(dims)}")
        if any(ds.size < 1 for ds in self.datasets):
            raise InvalidSpec("every user needs at least one data point")
        self.dim = dims.pop()
        self.sizes = np.array([ds.size for ds in self.datasets], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)[:-1]])
        self.weights = self.sizes / self.sizes.sum()
        self.X = np.concatenate([np.asarray(ds.X, dtype=float) for ds in self.datasets])
        if all(ds.y is not None for ds in self.datasets):
            self.y = np.concatenate([np.asarray(ds.y, dtype=float) for ds in self.datasets])
        else:
            self.y = None
        if isinstance(self.loss, LogisticLoss) and self.y is None:
            raise InvalidSpec("logistic loss needs labels")
        self._optimum = None

    @property
    def n_users(self) -> int:
        return len(self.datasets)

    def _check(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dim,):
            raise DimensionMismatch(f"expected model of shape ({self.dim},), got {w.shape}")
        return w

    def _rows(self, i):
        lo = self.offsets[i]
        return slice(lo, lo + self.sizes[i])

    def _labels(self, rows):
        return None if self.y is None else self.y[rows]

    def local_loss(self, i: int, w) -> float:
        w = self._check(w)
        rows = self._rows(i)
        return float(self.loss.values(w, self.X[rows], self._labels(rows)).mean())

    def local_losses(self, w) -> np.ndarray:
        w = self._check(w)
        per_point = self.loss.values(w, self.X, self.y)
        return np.add.reduceat(per_point, self.offsets) / self.sizes

    def global_loss(self, w) -> float:
        return float(self.weights @ self.local_losses(w))

    def local_gradient(self, i: int, w) -> np.ndarray:
        w = self._check(w)
        rows = self._rows(i)
        return self.loss.gradients(w, self.X[rows], self._labels(rows)).mean(axis=0)

    def global_gradient(self, w) -> np.ndarray:
        w = self._check(w)
        per_point = self.loss.gradients(w, self.X, self.y)
        local = np.add.reduceat(per_point, self.offsets, axis=0) / self.sizes[:, None]
        return self.weights @ local

    def point_gradients(self, users, w, index) -> np.ndarray:
        """Per-point gradients, one row per (user, local index) pair."""
        w = self._check(w)
        rows = self.offsets[users] + np.asarray(index)
        return self.loss.gradients(w, self.X[rows], self._labels(rows))

    def sample_indices(self, users, seed, counter) -> np.ndarray:
        """Uniform local data index per user, drawn from the data-sampling stream."""
        users = np.asarray(users)
        return streams.integers(self.sizes[users], seed, users, streams.DATA, counter)

    def sample_index_table(self, seed, horizon: int) -> np.ndarray:
        """Data indices for every (user, iteration); row i equals sample_indices(i, seed, t) over t."""
        users = np.arange(self.n_users)
        return streams.integers(self.sizes[:, None], seed, users[:, None], streams.DATA, np.arange(horizon))

    def stochastic_gradients(self, users, w, seed, counter) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        return self.point_gradients(users, w, self.sample_indices(users, seed, counter))

    def stochastic_gradient(self, i: int, w, seed: int, counter: int) -> np.ndarray:
        return self.stochastic_gradients(np.array([i]), w, seed, counter)[0]

    def curvature(self) -> tuple[float, float]:
        """(mu, L) valid for every local loss: min of moduli, max of smoothness constants."""
        pairs = [self.loss.curvature(np.asarray(ds.X, dtype=float)) for ds in self.datasets]
        return min(p[0] for p in pairs), max(p[1] for p in pairs)

    def solve_optimum(self) -> tuple[np.ndarray, float]:
        if self._optimum is None:
            self._optimum = self._solve()
        w, f = self._optimum
        return w.copy(), f

    def _solve(self):
        if isinstance(self.loss, QuadraticLoss):
            means = np.add.reduceat(self.X, self.offsets, axis=0) / self.sizes[:, None]
            w = self.weights @ means
            return w, self.global_loss(w)
        _, L = self.curvature()
        step = 1.0 / L
        w = np.zeros(self.dim)
        for _ in range(MAX_SOLVER_STEPS):
            g = self.global_gradient(w)
            if np.linalg.norm(g) <= OPTIMUM_TOL:
                return w, self.global_loss(w)
            w = w - step * g
        raise NonConvergence(f"gradient norm still {np.linalg.norm(g):.3e} after {MAX_SOLVER_STEPS} steps")

    def estimate_constants(self, ball_radius: float = 1.0, n_directions: int = 64,
                           seed: int = 0) -> ProblemConstants:
        """Analytic mu, L; sampled G and sigma over a ball around w*.

        G^2 and sigma^2 are the largest per-point squared gradient norm and the
        largest per-user gradient variance seen at w* and at ``n_directions``
        points on the sphere of radius ``ball_radius``, inflated by 1.1.
        """
        mu, L = self.curvature()
        w_star, _ = self.solve_optimum()
        if self.dim == 1:
            dirs = np.array([[1.0], [-1.0]])
        else:
            dirs = streams.generator(seed, "constants").standard_normal((n_directions, self.dim))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        probes = np.vstack([w_star, w_star + ball_radius * dirs])
        g2 = 0.0
        var = 0.0
        for w in probes:
            per_point = self.loss.gradients(w, self.X, self.y)
            g2 = max(g2, float((per_point * per_point).sum(axis=1).max()))
            local = np.add.reduceat(per_point, self.offsets, axis=0) / self.sizes[:, None]
            centered = per_point - np.repeat(local, self.sizes, axis=0)
            per_user = np.add.reduceat((centered * centered).sum(axis=1), self.offsets) / self.sizes
            var = max(var, float(per_user.max()))
        return ProblemConstants(mu, L, float(np.sqrt(G_SAFETY * g2)),
                                float(np.sqrt(G_SAFETY * var)), float(ball_radius))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["user_id"] + [f"x{k}" for k in range(self.dim)]
            if self.y is not None:
                header.append("label")
            writer.writerow(header)
            for ds in self.datasets:
                for j in range(ds.size):
                    row = [ds.user_id] + [repr(float(v)) for v in ds.X[j]]
                    if self.y is not None:
                        row.append(repr(float(ds.y[j])))
                    writer.writerow(row)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic federated dataset.

    Two classes with means at +/- ``separation`` along a random direction.
    ``group_label_skew`` gives user group k = i mod n_groups a class-0
    fraction interpolated linearly from ``skew`` (group 0) to ``1 - skew``
    (last group). Logistic features carry a leading constant 1 as the bias.
    """

    kind: str = "quadratic"
    n_users: int = 10
    dim: int = 5
    points_per_user: int = 1
    mode: str = "iid"
    l2: float = 0.1
    skew: float = 0.9
    n_groups: int = 4
    separation: float = 1.0
    spread: float = 1.0
    offset: float = 0.0
    seed: Optional[int] = None

    def validate(self) -> None:
        if self.kind not in ("quadratic", "logistic"):
            raise InvalidSpec(f"unknown objective kind {self.kind!r}")
        if self.mode not in ("iid", "group_label_skew"):
            raise InvalidSpec(f"unknown partition mode {self.mode!r}")
        if self.n_users < 1 or self.points_per_user < 1:
            raise InvalidSpec("n_users and points_per_user must be >= 1")
        if self.dim < (2 if self.kind == "logistic" else 1):
            raise InvalidSpec("dim too small (logistic needs a bias slot plus one feature)")
        if self.kind == "logistic" and not self.l2 > 0:
            raise InvalidSpec("l2 must be > 0")
        if not 0.5 <= self.skew <= 1.0:
            raise InvalidSpec("skew must lie in [0.5, 1]")
        if self.n_groups < 1:
            raise InvalidSpec("n_groups must be >= 1")
        if self.spread < 0 or self.separation < 0:
            raise InvalidSpec("spread and separation must be non-negative")

    def class0_fraction(self, group: int) -> float:
        if self.n_groups == 1:
            return self.skew
        return self.skew - group * (2 * self.skew - 1) / (self.n_groups - 1)

    def to_record(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def make_synthetic(spec: SyntheticSpec, seed: int = 0) -> Objective:
    spec.validate()
    rng = streams.generator(spec.seed if spec.seed is not None else seed, "synthetic")
    n, m = spec.n_users, spec.points_per_user
    informative = spec.dim - 1 if spec.kind == "logistic" else spec.dim
    direction = rng.standard_normal(informative)
    direction /= np.linalg.norm(direction)

    if spec.mode == "iid":
        classes = rng.integers(0, 2, size=n * m)
        classes = rng.permutation(classes).reshape(n, m)
    else:
        classes = np.ones((n, m), dtype=np.int64)
        for i in range(n):
            n0 = int(round(spec.class0_fraction(i % spec.n_groups) * m))
            classes[i, :n0] = 0
            classes[i] = rng.permutation(classes[i])

    signs = 2.0 * classes - 1.0
    noise = rng.standard_normal((n, m, informative))
    feats = signs[..., None] * spec.separation * direction + spec.spread * noise + spec.offset

    datasets = []
    for i in range(n):
        if spec.kind == "logistic":
            X = np.hstack([np.ones((m, 1)), feats[i]])
            datasets.append(LocalDataset(i, X, signs[i].copy()))
        else:
            datasets.append(LocalDataset(i, feats[i].copy(), signs[i].copy()))
    loss = LogisticLoss(spec.l2) if spec.kind == "logistic" else QuadraticLoss()
    return Objective(datasets, loss)
