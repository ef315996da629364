"""scikit-learn classifier trained by simulated energy-harvesting distributed SGD."""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator
from sklearn.linear_model._base import LinearClassifierMixin
from sklearn.utils import check_random_state
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .energy import UniformWindow, periodic_schedule
from .objective import LocalDataset, LogisticLoss, Objective
from .training import LearningRate, RunConfig, run


class EnergyHarvestingSGDClassifier(LinearClassifierMixin, BaseEstimator):
    """l2-regularized logistic regression (one-vs-rest) fit over simulated users.

    Rows of ``X`` are split across users (round-robin unless ``users`` is
    passed to :meth:`fit`; capped at one user per sample). User ``i`` harvests energy every
    ``arrival_periods[i % len(arrival_periods)]`` iterations; ``policy``
    decides when each user spends it on a gradient. ``best_effort`` uses
    uniform-window arrivals with the same periods, since it needs random
    arrivals.
    """

    def __init__(self, policy="alg1", arrival_periods=(1, 5, 10, 20), n_users=40, alpha=0.1,
                 learning_rate=0.01, n_iter=2000, fit_intercept=True, random_state=None):
        self.policy = policy
        self.arrival_periods = arrival_periods
        self.n_users = n_users
        self.alpha = alpha
        self.learning_rate = learning_rate
        self.n_iter = n_iter
        self.fit_intercept = fit_intercept
        self.random_state = random_state

    def _design(self, X):
        if self.fit_intercept:
            return np.hstack([np.ones((X.shape[0], 1)), X])
        return X

    def fit(self, X, y, users=None):
        X, y = validate_data(self, X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ValueError(f"need samples of at least 2 classes; got {len(self.classes_)} class")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")

        if users is None:
            if self.n_users < 1:
                raise ValueError("n_users must be >= 1")
            owner = np.arange(len(y)) % min(self.n_users, len(y))
        else:
            users = np.asarray(users)
            if users.shape != (len(y),):
                raise ValueError("users must hold one id per sample")
            _, owner = np.unique(users, return_inverse=True)
        n_users = int(owner.max()) + 1
        periods = list(self.arrival_periods)
        if self.policy == "best_effort":
            models = [UniformWindow(periods[i % len(periods)]) for i in range(n_users)]
        else:
            models = [periodic_schedule(periods[i % len(periods)], self.n_iter) for i in range(n_users)]
        seed = int(check_random_state(self.random_state).randint(0, 2**31 - 1))

        # one-vs-rest beyond two classes
        targets = [self.classes_[1]] if len(self.classes_) == 2 else list(self.classes_)
        Z = self._design(X)
        weights, curves, updates, evals = [], [], [], 0
        for cls in targets:
            labels = np.where(y == cls, 1.0, -1.0)
            datasets = [LocalDataset(i, Z[owner == i], labels[owner == i]) for i in range(n_users)]
            obj = Objective(datasets, LogisticLoss(self.alpha))
            config = RunConfig(n_users, self.n_iter, self.policy, obj, models,
                               LearningRate(self.learning_rate), seed=seed,
                               metric_every=max(1, self.n_iter // 100))
            trace = run(config, obj, track_gap=False)
            weights.append(trace.final_w)
            curves.append(trace.global_loss)
            updates.append(trace.n_updates)
            evals += trace.n_gradient_evals

        W = np.vstack(weights)
        if self.fit_intercept:
            self.intercept_ = W[:, 0].copy()
            self.coef_ = W[:, 1:].copy()
        else:
            self.intercept_ = np.zeros(len(W))
            self.coef_ = W
        self.loss_curve_ = curves[0] if len(curves) == 1 else np.vstack(curves)
        self.n_updates_ = updates[0]
        self.n_gradient_evals_ = evals
        return self

    def predict_proba(self, X):
        check_is_fitted(self)
        scores = expit(self.decision_function(X))
        if scores.ndim == 1:
            return np.column_stack([1.0 - scores, scores])
        return scores / scores.sum(axis=1, keepdims=True)
