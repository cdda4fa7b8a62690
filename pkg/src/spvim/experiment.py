"""Desk-scale Monte Carlo experiment harness.

Two experiment kinds:

* ``estimation``: replicate a simulate-and-estimate loop and report
  per-feature mean estimates, scaled mean squared error (n times the
  squared error), confidence-interval coverage against known truth, and
  test rejection rates (type I error on null features, power on signal
  features).
* ``sampling_rate``: fix a synthetic game with known subset values,
  re-estimate from sampled subsets across a grid of draw counts, and
  regress log root-mean-square error on log draws; the slope checks the
  square-root convergence of the subset-sampling error.

Per-replicate failures are recorded rather than fatal, up to a
configurable budget (default 5%).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _rng
from .errors import ConfigError, SpvimError
from .pipeline import EstimationConfig, estimate_spvim
from .simulate import linear_true_importance, simulate
from .solver import ConstraintSystem, solve_cwls
from .subsets import exact_shapley, ordered_subsets, sample_subsets

MIN_REPLICATES = 50
DEFAULT_FAILURE_BUDGET = 0.05


def run_experiment(spec: dict, workers: int = 1) -> dict:
    """Run an experiment specification and return its summary report."""
    kind = spec.get("kind", "estimation")
    if kind == "estimation":
        return _estimation_experiment(spec, workers)
    if kind == "sampling_rate":
        return _sampling_rate_experiment(spec, workers)
    raise ConfigError(f"unknown experiment kind {kind!r}")


def _resolve_truth(spec: dict):
    if "truth" in spec and spec["truth"] is not None:
        return np.asarray(spec["truth"], dtype=float)
    dgp = spec["dgp"]
    if dgp.get("kind") == "linear":
        return linear_true_importance(dgp["coefficients"], dgp.get("noise", 1.0))
    return None


def _estimation_experiment(spec: dict, workers: int) -> dict:
    dgp = spec.get("dgp")
    if not dgp:
        raise ConfigError("estimation experiment requires a 'dgp' entry")
    replicates = int(spec.get("replicates", 0))
    if replicates < MIN_REPLICATES:
        raise ConfigError(f"replicates must be >= {MIN_REPLICATES}, got {replicates}")
    n_values = spec.get("n", 1000)
    if not isinstance(n_values, (list, tuple)):
        n_values = [n_values]
    config = EstimationConfig.from_dict(spec.get("config", {}))
    seed = int(spec.get("seed", config.seed))
    truth = _resolve_truth(spec)
    budget = float(spec.get("failure_budget", DEFAULT_FAILURE_BUDGET))

    def one(n, r):
        sim_seed = _rng.derive_seed(seed, _rng.EXPERIMENT, r, 0)
        est_seed = _rng.derive_seed(seed, _rng.EXPERIMENT, r, 1)
        data = simulate(dgp, n, sim_seed)
        cfg = EstimationConfig.from_dict({**config.to_dict(), "seed": est_seed})
        return estimate_spvim(data, cfg)

    report = {"kind": "estimation", "replicates": replicates, "per_n": []}
    for n in n_values:
        results, failures = [], []
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_capture, one, n, r) for r in range(replicates)]
                outcomes = [f.result() for f in futures]
        else:
            outcomes = [_capture(one, n, r) for r in range(replicates)]
        for out in outcomes:
            (results if not isinstance(out, str) else failures).append(out)
        if len(failures) > budget * replicates:
            raise SpvimError(
                f"{len(failures)} of {replicates} replicates failed "
                f"(budget {budget:.0%}); first failure: {failures[0]}"
            )
        report["per_n"].append(_summarize(n, results, failures, truth))
    return report


def _capture(fn, *args):
    try:
        return fn(*args)
    except SpvimError as exc:
        return f"{type(exc).__name__}: {exc}"


def _summarize(n, results, failures, truth):
    psi = np.array([r.psi for r in results])
    labels = list(results[0].labels)
    entry = {
        "n": int(n),
        "completed": len(results),
        "failed": len(failures),
        "failures": failures,
        "labels": labels,
        "mean_estimate": psi.mean(axis=0).tolist(),
        "sd_estimate": psi.std(axis=0, ddof=1).tolist(),
    }
    if truth is not None:
        err = psi - truth[None, :]
        entry["truth"] = truth.tolist()
        entry["scaled_mse"] = (n * (err**2).mean(axis=0)).tolist()
        lower = np.array([r.ci_lower for r in results])
        upper = np.array([r.ci_upper for r in results])
        entry["coverage"] = (
            ((lower <= truth[None, :]) & (truth[None, :] <= upper)).mean(axis=0).tolist()
        )
    if results[0].tests is not None:
        rejections = np.array([[t.reject for t in r.tests] for r in results])
        entry["rejection_rate"] = rejections.mean(axis=0).tolist()
    return entry


def _sampling_rate_experiment(spec: dict, workers: int) -> dict:
    """Subset-sampling error decay for a fixed game with known values."""
    p = int(spec.get("p", 8))
    m_grid = [int(m) for m in spec.get("m_grid", [2**k for k in range(7, 14)])]
    seeds = int(spec.get("seeds", 200))
    if seeds < MIN_REPLICATES:
        raise ConfigError(f"seeds must be >= {MIN_REPLICATES}, got {seeds}")
    seed = int(spec.get("seed", 0))

    game_rng = _rng.derive_rng(seed, _rng.EXPERIMENT, 0)
    v_all = game_rng.random(2**p)
    value_of = {s.indices: v_all[i] for i, s in enumerate(ordered_subsets(p))}
    psi_true = exact_shapley(v_all, p)

    def rmse_for(m):
        errors = np.empty(seeds)
        for r in range(seeds):
            rng = _rng.derive_rng(seed, _rng.EXPERIMENT, m, r)
            dist = sample_subsets(p, m, rng)
            v = np.array([value_of[s.indices] for s in dist.unique_subsets])
            constraint = ConstraintSystem.for_dimension(p, v[0], v[-1])
            psi = solve_cwls(dist, v, constraint).psi
            errors[r] = np.linalg.norm(psi - psi_true)
        return float(np.sqrt(np.mean(errors**2)))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rmse = list(pool.map(rmse_for, m_grid))
    else:
        rmse = [rmse_for(m) for m in m_grid]

    slope = float(np.polyfit(np.log(m_grid), np.log(rmse), 1)[0])
    return {
        "kind": "sampling_rate",
        "p": p,
        "m_grid": m_grid,
        "seeds": seeds,
        "rmse": rmse,
        "log_log_slope": slope,
    }
