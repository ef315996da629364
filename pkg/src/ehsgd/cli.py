"""Command-line entry point: single runs, seed sweeps, presets, verifier suites."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis
from .config import PRESET_POLICIES, PRESETS, config_from_dict, config_to_dict
from .energy import Bernoulli, DeterministicSchedule, UniformWindow
from .exceptions import ConfigError, EHSGDError, ParseError
from .scheduling import POLICIES
from .training import RunConfig, max_stable_rate, run

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
SEED_ENV = "EHSGD_SEED"


def _version() -> str:
    from . import __version__
    return __version__


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def parse_seed_range(text: str) -> list[int]:
    """``"A..B"`` (inclusive) or a single integer."""
    try:
        if ".." in text:
            lo, hi = (int(s) for s in text.split("..", 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B or an integer, got {text!r}") from None
    if lo < 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"empty or negative seed range {text!r}")
    return list(range(lo, hi + 1))


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def derived_constants(config: RunConfig, obj) -> dict:
    """mu, L, G, sigma, and where the policy defines them, C and the bound value."""
    consts = obj.estimate_constants(ball_radius=config.ball_radius, seed=config.seed)
    out = consts.to_dict()
    out["C"] = out["bound"] = None
    t_max = None
    if config.policy == "full":
        t_max = np.ones(config.n_users)
    elif config.policy in ("alg1", "best_effort"):
        t_max = [analysis.t_max_for_model(m, config.horizon, config.seed, i)
                 for i, m in enumerate(config.arrivals)]
    if t_max is None:
        out["note"] = f"no scaling rule for {config.policy!r}; C and the bound are undefined"
        return out
    out["C"] = analysis.compute_C(obj.weights, t_max, consts.G)
    eta = config.lr.eta0
    if not config.lr.constant:
        out["note"] = "bound needs a constant learning rate"
    elif eta > max_stable_rate(consts.mu, consts.L):
        out["note"] = f"eta={eta} exceeds min(1/(2 mu), 1/L); bound premise not met"
    else:
        w0 = np.zeros(obj.dim) if config.w0 is None else np.asarray(config.w0, dtype=float)
        gap0 = obj.global_loss(w0) - obj.solve_optimum()[1]
        inputs = analysis.BoundInputs(consts.mu, consts.L, eta, config.horizon, gap0,
                                      obj.weights, t_max, consts.G)
        out["bound"] = analysis.convergence_bound(inputs)
    return out


def run_experiment(config: RunConfig, output_dir) -> dict:
    """Run one config and write metrics.csv, summary.json and manifest.json.

    Returns the summary. Module errors propagate to the caller.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    obj = config.build_objective()
    trace = run(config, obj)
    trace.write_csv(out / "metrics.csv")
    summary = {"policy": config.policy, "seed": config.seed, **trace.summary()}
    _write_json(out / "summary.json", summary)
    _write_json(out / "manifest.json", {
        "config": config_to_dict(config),
        "version": _version(),
        "seed": config.seed,
        "constants": derived_constants(config, obj),
        "started": started,
        "finished": _now(),
    })
    return summary


def _run_job(job):
    config, out = job
    return run_experiment(config, out)


def _mean_se(values) -> dict:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
    return {"mean": float(v.mean()), "stderr": se}


def aggregate(summaries: Sequence[dict]) -> dict:
    return {
        "n_runs": len(summaries),
        "seeds": [s["seed"] for s in summaries],
        "final_loss": _mean_se([s["final_loss"] for s in summaries]),
        "final_gap": _mean_se([s["final_gap"] for s in summaries]),
        "n_updates": _mean_se([s["n_updates"] for s in summaries]),
    }


def run_batch(configs: Sequence[RunConfig], output_dir, jobs: int = 1) -> dict:
    """Run one config per seed into ``seed_<k>/`` subdirectories and aggregate."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    work = [(c, out / f"seed_{c.seed}") for c in configs]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_run_job, work))
    else:
        summaries = [_run_job(j) for j in work]
    agg = {"policy": configs[0].policy, **aggregate(summaries)}
    _write_json(out / "summary.json", agg)
    _write_json(out / "manifest.json", {
        "config": config_to_dict(configs[0]),
        "seeds": [c.seed for c in configs],
        "version": _version(),
        "note": "batch; each seed_<k>/manifest.json reproduces its run",
        "finished": _now(),
    })
    return agg


def run_verifiers(suite: str, output_dir=None, stream=None) -> int:
    stream = stream or sys.stdout
    if suite != "all" and suite not in analysis.SUITES:
        print(f"error: unknown suite {suite!r}", file=sys.stderr)
        return EXIT_USAGE
    reports = analysis.run_suite(suite)
    for r in reports:
        print(json.dumps(r.to_dict(), sort_keys=True), file=stream)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "reports.json", [r.to_dict() for r in reports])
    return EXIT_OK if all(r.ok for r in reports) else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ehsgd", description=__doc__)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--config", metavar="PATH", help="JSON run config (or a manifest.json to rerun)")
    mode.add_argument("--preset", choices=sorted(PRESETS), help="built-in experiment")
    mode.add_argument("--verify", metavar="SUITE", choices=[*analysis.SUITES, "all"],
                      help="run a verifier suite: %(choices)s")
    p.add_argument("--output", metavar="DIR", help="output directory")
    p.add_argument("--seeds", metavar="A..B", type=parse_seed_range, help="sweep master seeds A..B inclusive")
    p.add_argument("--policy", choices=sorted(POLICIES), help="override the config's policy")
    p.add_argument("--jobs", type=int, default=1, help="concurrent runs in a sweep (default 1)")
    p.add_argument("--dump-data", metavar="PATH", help="write the synthetic dataset as CSV")
    return p


def _load_raw(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON ({exc})") from exc
    if isinstance(data, dict) and "config" in data and "version" in data:
        data = data["config"]
    return data


def _env_seed() -> Optional[int]:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from None
    if seed < 0:
        raise ConfigError(f"{SEED_ENV} must be non-negative")
    return seed


def _configs_from_args(args) -> list[list[RunConfig]]:
    """One list of per-seed configs per policy."""
    env_seed = _env_seed()
    if args.preset:
        policies = [args.policy] if args.policy else list(PRESET_POLICIES)
        seeds = args.seeds or [env_seed if env_seed is not None else 0]
        make = PRESETS[args.preset]
        try:
            return [[make(policy, s) for s in seeds] for policy in policies]
        except (EHSGDError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    raw = _load_raw(args.config)
    if isinstance(raw, dict):
        if args.policy:
            raw = {**raw, "policy": args.policy}
        if env_seed is not None:
            raw = {**raw, "seed": env_seed}
    base = config_from_dict(raw)
    seeds = args.seeds or [base.seed]
    return [[dataclasses.replace(base, seed=s) for s in seeds]]


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")

    if args.verify:
        try:
            return run_verifiers(args.verify, args.output)
        except (EHSGDError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAILURE

    try:
        groups = _configs_from_args(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.output is None and args.dump_data is None:
        parser.error("--output is required to run an experiment")

    try:
        if args.dump_data:
            groups[0][0].build_objective().to_csv(args.dump_data)
        if args.output is None:
            return EXIT_OK
        out = Path(args.output)
        batch = args.seeds is not None
        per_policy = {}
        for configs in groups:
            target = out / configs[0].policy if args.preset else out
            if batch:
                per_policy[configs[0].policy] = run_batch(configs, target, args.jobs)
            else:
                per_policy[configs[0].policy] = run_experiment(configs[0], target)
        if args.preset:
            _write_json(out / "summary.json", per_policy)
            _write_json(out / "manifest.json", {"preset": args.preset, "policies": list(per_policy),
                                                "seeds": [c.seed for c in groups[0]],
                                                "version": _version(), "finished": _now()})
    except (EHSGDError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
