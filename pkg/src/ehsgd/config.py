"""JSON run configs: parsing with field-path validation, serialization, presets."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from .energy import (Bernoulli, DeterministicSchedule, UniformWindow, model_to_record,
                     periodic_schedule)
from .exceptions import EHSGDError, ParseError, ValidationError
from .objective import Objective, SyntheticSpec
from .scheduling import POLICIES, make_policy
from .training import LearningRate, RunConfig

TOP_LEVEL_KEYS = {"N", "horizon", "policy", "objective", "arrival", "arrivals", "arrival_groups",
                  "eta", "seed", "metric_every", "check_bound", "n_groups", "ball_radius"}
OBJECTIVE_KEYS = {"kind", "dim", "points_per_user", "mode", "l2", "lambda", "skew", "n_groups",
                  "separation", "spread", "offset", "seed"}


def _int(value, path, minimum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(path, f"must be >= {minimum}, got {value}")
    return value


def _float(value, path) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValidationError(path, f"expected a finite number, got {value!r}")
    return float(value)


def _record(value, path) -> dict:
    if not isinstance(value, dict):
        raise ValidationError(path, f"expected an object, got {type(value).__name__}")
    return value


def arrival_from_record(rec: Any, path: str, horizon: int):
    rec = _record(rec, path)
    kind = rec.get("kind")
    if kind == "deterministic":
        if "times" in rec:
            times = rec["times"]
            if not isinstance(times, list):
                raise ValidationError(f"{path}.times", "expected a list of iteration indices")
            times = [_int(t, f"{path}.times[{k}]", 0) for k, t in enumerate(times)]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValidationError(f"{path}.times", "must be strictly increasing")
            if times and times[-1] >= horizon:
                raise ValidationError(f"{path}.times", f"time {times[-1]} outside horizon {horizon}")
            return DeterministicSchedule(tuple(times))
        if "period" in rec:
            period = _int(rec["period"], f"{path}.period", 1)
            offset = _int(rec.get("offset", 0), f"{path}.offset", 0)
            return periodic_schedule(period, horizon, offset)
        raise ValidationError(path, "deterministic arrivals need 'times' or 'period'")
    if kind == "bernoulli":
        beta = _float(rec.get("beta"), f"{path}.beta")
        if not 0.0 < beta <= 1.0:
            raise ValidationError(f"{path}.beta", f"must lie in (0, 1], got {beta}")
        return Bernoulli(beta)
    if kind == "uniform_window":
        return UniformWindow(_int(rec.get("period"), f"{path}.period", 1))
    raise ValidationError(f"{path}.kind", f"unknown arrival kind {kind!r}")


def objective_from_record(rec: Any, n_users: int) -> SyntheticSpec:
    rec = _record(rec, "objective")
    unknown = set(rec) - OBJECTIVE_KEYS
    if unknown:
        raise ValidationError(f"objective.{sorted(unknown)[0]}", "unknown key")
    kind = rec.get("kind")
    if kind not in ("quadratic", "logistic"):
        raise ValidationError("objective.kind", f"expected 'quadratic' or 'logistic', got {kind!r}")
    kw: dict = {"kind": kind, "n_users": n_users}
    for key in ("dim", "points_per_user", "n_groups"):
        if key in rec:
            kw[key] = _int(rec[key], f"objective.{key}", 1)
    for key in ("skew", "separation", "spread", "offset"):
        if key in rec:
            kw[key] = _float(rec[key], f"objective.{key}")
    if "l2" in rec or "lambda" in rec:
        key = "l2" if "l2" in rec else "lambda"
        kw["l2"] = _float(rec[key], f"objective.{key}")
        if kw["l2"] <= 0:
            raise ValidationError(f"objective.{key}", "must be > 0")
    if "mode" in rec:
        if rec["mode"] not in ("iid", "group_label_skew"):
            raise ValidationError("objective.mode", f"expected 'iid' or 'group_label_skew', got {rec['mode']!r}")
        kw["mode"] = rec["mode"]
    if rec.get("seed") is not None:
        kw["seed"] = _int(rec["seed"], "objective.seed")
    spec = SyntheticSpec(**kw)
    try:
        spec.validate()
    except EHSGDError as exc:
        raise ValidationError("objective", str(exc)) from exc
    return spec


def config_from_dict(data: Any) -> RunConfig:
    data = _record(data, "<root>")
    unknown = set(data) - TOP_LEVEL_KEYS
    if unknown:
        raise ValidationError(sorted(unknown)[0], "unknown key")
    for key in ("N", "horizon", "policy", "objective"):
        if key not in data:
            raise ValidationError(key, "required")
    n = _int(data["N"], "N", 1)
    horizon = _int(data["horizon"], "horizon", 1)
    policy = data["policy"]
    if policy not in POLICIES:
        raise ValidationError("policy", f"expected one of {sorted(POLICIES)}, got {policy!r}")

    given = [k for k in ("arrival", "arrivals", "arrival_groups") if k in data]
    if len(given) > 1:
        raise ValidationError(given[1], f"conflicts with {given[0]!r}")
    arrivals = None
    n_groups_default = 1
    if "arrival" in data:
        model = arrival_from_record(data["arrival"], "arrival", horizon)
        arrivals = [model] * n
    elif "arrivals" in data:
        recs = data["arrivals"]
        if not isinstance(recs, list) or len(recs) != n:
            raise ValidationError("arrivals", f"expected a list of {n} arrival records")
        arrivals = [arrival_from_record(r, f"arrivals[{i}]", horizon) for i, r in enumerate(recs)]
    elif "arrival_groups" in data:
        recs = data["arrival_groups"]
        if not isinstance(recs, list) or not recs:
            raise ValidationError("arrival_groups", "expected a non-empty list of arrival records")
        groups = [arrival_from_record(r, f"arrival_groups[{k}]", horizon) for k, r in enumerate(recs)]
        arrivals = [groups[i % len(groups)] for i in range(n)]
        n_groups_default = len(groups)
    elif policy != "full":
        raise ValidationError("arrival", f"policy {policy!r} needs arrival models")
    if arrivals is not None:
        try:
            make_policy(policy, arrivals)
        except EHSGDError as exc:
            raise ValidationError("policy", str(exc)) from exc

    eta = data.get("eta", 0.1)
    if isinstance(eta, dict):
        unknown = set(eta) - {"eta0", "decay"}
        if unknown:
            raise ValidationError(f"eta.{sorted(unknown)[0]}", "unknown key")
        eta0 = _float(eta.get("eta0"), "eta.eta0")
        decay = _float(eta.get("decay", 0.0), "eta.decay")
        if decay < 0:
            raise ValidationError("eta.decay", "must be >= 0")
    else:
        eta0, decay = _float(eta, "eta"), 0.0
    if eta0 <= 0:
        raise ValidationError("eta" if not isinstance(eta, dict) else "eta.eta0", "must be > 0")

    check_bound = data.get("check_bound", False)
    if not isinstance(check_bound, bool):
        raise ValidationError("check_bound", "expected true or false")
    ball_radius = _float(data.get("ball_radius", 1.0), "ball_radius")
    if ball_radius <= 0:
        raise ValidationError("ball_radius", "must be > 0")

    return RunConfig(
        n_users=n,
        horizon=horizon,
        policy=policy,
        objective=objective_from_record(data["objective"], n),
        arrivals=arrivals,
        lr=LearningRate(eta0, decay),
        seed=_int(data.get("seed", 0), "seed", 0),
        metric_every=_int(data.get("metric_every", 1), "metric_every", 1),
        check_bound=check_bound,
        n_groups=_int(data.get("n_groups", n_groups_default), "n_groups", 1),
        ball_radius=ball_radius,
    )


def parse_config(path) -> RunConfig:
    """Load a config file. A manifest written by a previous run is accepted too."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON ({exc})") from exc
    if isinstance(data, dict) and "config" in data and "version" in data:
        data = data["config"]
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    if isinstance(cfg.objective, Objective):
        raise TypeError("configs holding a prebuilt Objective cannot be serialized")
    spec = cfg.objective.to_record()
    spec.pop("n_users")
    out = {
        "N": cfg.n_users,
        "horizon": cfg.horizon,
        "policy": cfg.policy,
        "objective": spec,
        "eta": cfg.lr.eta0 if cfg.lr.constant else {"eta0": cfg.lr.eta0, "decay": cfg.lr.decay},
        "seed": cfg.seed,
        "metric_every": cfg.metric_every,
        "check_bound": cfg.check_bound,
        "n_groups": cfg.n_groups,
        "ball_radius": cfg.ball_radius,
    }
    if cfg.arrivals is not None:
        out["arrivals"] = [model_to_record(m) for m in cfg.arrivals]
    return out


GROUP_PERIODS = (1, 5, 10, 20)
PRESET_POLICIES = ("alg1", "naive", "wait_for_all", "full")


def group_periods_preset(policy: str = "alg1", seed: int = 0, horizon: int = 2000,
                         eta: float = 0.01) -> RunConfig:
    """40 users in four groups (i mod 4) with arrival periods 1, 5, 10, 20.

    Workload: l2-regularized logistic regression
    (lambda=0.1), d=20 including the bias, 50 points per user, class mixture
    skewed by group. The dataset is fixed (data seed 0); ``seed`` drives
    scheduling and gradient sampling.
    """
    spec = SyntheticSpec(kind="logistic", n_users=40, dim=20, points_per_user=50,
                         mode="group_label_skew", l2=0.1, skew=0.9, n_groups=4, seed=0)
    arrivals = [periodic_schedule(GROUP_PERIODS[i % 4], horizon) for i in range(40)]
    return RunConfig(40, horizon, policy, spec, arrivals, LearningRate(eta), seed=seed,
                     metric_every=10, n_groups=4)


# CLI name kept stable for existing scripts
PRESETS = {"paper-sec5": group_periods_preset}
