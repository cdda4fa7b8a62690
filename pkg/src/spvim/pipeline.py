"""End-to-end estimation: sample subsets, cross-fit, solve, infer.

The run proceeds in five steps: draw ``ceil(gamma * n)`` subsets from
the kernel-weight law; cross-fit predictiveness for every unique subset
(plus the always-included empty and full subsets); solve the
constrained weighted least squares for the importance vector; estimate
the two-part covariance; and form Wald intervals.  When hypothesis
tests are requested, the rows are split in half and the split-sample
test runs per feature on an independent full fit (first portion) and
null-predictiveness fit (second portion).

Group importance runs the same pipeline over meta-features that expand
to unions of columns; subpopulation importance trains on all rows but
evaluates predictiveness and influence only on rows matching a
covariate predicate.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from . import _rng
from .crossfit import CrossFitEvaluator, CrossFitScheme, make_folds
from .data import Dataset
from .errors import ConfigError, PartitionError, SpvimError, SubpopulationSizeError
from .inference import (
    CovarianceEstimate,
    estimate_covariance,
    null_fit_variance,
    spvim_test,
    wald_intervals,
)
from .learners import LearnerSpec
from .measures import as_measure
from .solver import ConstraintSystem, solve_cwls
from .subsets import FeatureSubset, sample_subsets

RECOMMENDED_ROWS_PER_COORDINATE = 20
ADDITIVITY_TOL = 1e-10

_COMPARATORS = {
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
    "==": np.equal,
    "!=": np.not_equal,
}


@contextmanager
def _stage(name: str):
    """Annotate escaping package errors with the pipeline stage."""
    try:
        yield
    except SpvimError as exc:
        first = f"[{name}] {exc.args[0]}" if exc.args else f"[{name}]"
        exc.args = (first,) + exc.args[1:]
        raise


@dataclass(frozen=True)
class EstimationConfig:
    """All knobs of an estimation run; mirrored verbatim by config files."""

    gamma: float = 2.0
    scheme: CrossFitScheme = field(default_factory=CrossFitScheme)
    measure: str = "r_squared"
    learner: LearnerSpec = field(default_factory=lambda: LearnerSpec("linear_ols"))
    workers: int = 1
    seed: int = 0
    alpha: float = 0.05
    delta: float = 0.0
    groups: tuple | None = None
    subpopulation: tuple | None = None
    run_tests: bool = False
    bonferroni: bool = False
    nonnegative: bool = False

    def __post_init__(self):
        if self.gamma < 1.0:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.delta < 0.0:
            raise ConfigError("delta must be >= 0")
        as_measure(self.measure)
        if self.groups is not None:
            object.__setattr__(
                self, "groups", tuple(tuple(int(j) for j in g) for g in self.groups)
            )
        if self.subpopulation is not None:
            col, cmp, thr = self.subpopulation
            if cmp not in _COMPARATORS:
                raise ConfigError(f"unknown comparator {cmp!r}; choose from {sorted(_COMPARATORS)}")
            object.__setattr__(self, "subpopulation", (col, cmp, float(thr)))

    @classmethod
    def from_dict(cls, raw: dict) -> "EstimationConfig":
        raw = dict(raw)
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "scheme" in raw and isinstance(raw["scheme"], dict):
            raw["scheme"] = CrossFitScheme(**raw["scheme"])
        if "learner" in raw and isinstance(raw["learner"], dict):
            raw["learner"] = LearnerSpec(**raw["learner"])
        try:
            return cls(**raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        scheme = {"kind": self.scheme.kind, "folds": self.scheme.folds,
                  "train_fraction": self.scheme.train_fraction}
        learner = {"kind": self.learner.kind,
                   "hyperparameters": dict(self.learner.hyperparameters)}
        if self.learner.command:
            learner["command"] = list(self.learner.command)
        return {
            "gamma": self.gamma,
            "scheme": scheme,
            "measure": self.measure,
            "learner": learner,
            "workers": self.workers,
            "seed": self.seed,
            "alpha": self.alpha,
            "delta": self.delta,
            "groups": None if self.groups is None else [list(g) for g in self.groups],
            "subpopulation": None if self.subpopulation is None else list(self.subpopulation),
            "run_tests": self.run_tests,
            "bonferroni": self.bonferroni,
            "nonnegative": self.nonnegative,
        }


@dataclass(frozen=True)
class SpvimResult:
    """Estimates, covariance, intervals, tests, and run diagnostics.

    ``psi[0]`` is the null predictiveness; ``psi[1:]`` the per-feature
    (or per-group) importance values, which sum to total-minus-null
    predictiveness.
    """

    labels: tuple
    psi: np.ndarray
    lam: np.ndarray
    cov: CovarianceEstimate
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    alpha: float
    tests: tuple | None
    diagnostics: dict

    def __post_init__(self):
        v_empty, v_full = self.diagnostics["constraint"]
        gap = abs(float(self.psi[1:].sum()) - (v_full - v_empty))
        if gap > ADDITIVITY_TOL * (1.0 + abs(v_full - v_empty)):
            raise ValueError(f"additivity violated by {gap:.3e}")
        if abs(float(self.psi[0]) - v_empty) > ADDITIVITY_TOL:
            raise ValueError("leading coordinate must equal null predictiveness")

    @property
    def standard_errors(self) -> np.ndarray:
        return self.cov.standard_errors()

    def to_dict(self) -> dict:
        """JSON-ready summary (exact float round-trip via json)."""
        out = {
            "labels": list(self.labels),
            "estimates": [float(v) for v in self.psi],
            "std_errors": [float(v) for v in self.standard_errors],
            "ci_lower": [float(v) for v in self.ci_lower],
            "ci_upper": [float(v) for v in self.ci_upper],
            "alpha": self.alpha,
            "lagrange_multipliers": [float(v) for v in self.lam],
            "test_statistics": None,
            "p_values": None,
            "test_rejections": None,
            "diagnostics": _diagnostics_json(self.diagnostics),
        }
        if self.tests is not None:
            out["test_statistics"] = [t.statistic for t in self.tests]
            out["p_values"] = [t.p_value for t in self.tests]
            out["test_rejections"] = [t.reject for t in self.tests]
        return out


def _diagnostics_json(diag: dict) -> dict:
    out = dict(diag)
    out["constraint"] = [float(v) for v in diag["constraint"]]
    out["subset_values"] = [
        {"indices": list(s), "mass": float(m), "value": float(v)}
        for s, m, v in diag["subset_values"]
    ]
    out.pop("runtime_s", None)
    return out


def _measure_task(measure: str) -> str:
    return as_measure(measure).outcome_task


def _eval_mask(data: Dataset, predicate) -> np.ndarray:
    column, comparator, threshold = predicate
    if isinstance(column, str):
        col = data.column(column)
    else:
        col = int(column) - 1
        if not 0 <= col < data.p:
            raise ConfigError(f"predicate column {column} out of range [1, {data.p}]")
    return _COMPARATORS[comparator](data.X[:, col], threshold)


def _group_column_map(groups, p_raw: int):
    flat = [j for g in groups for j in g]
    if len(groups) < 2:
        raise PartitionError("need at least 2 groups")
    if sorted(flat) != list(range(1, p_raw + 1)):
        raise PartitionError(
            f"groups must disjointly cover features 1..{p_raw}; got {groups}"
        )
    lookup = {k + 1: np.asarray([j - 1 for j in g], dtype=np.intp)
              for k, g in enumerate(groups)}

    def column_map(subset: FeatureSubset) -> np.ndarray:
        if subset.is_empty:
            return np.empty(0, dtype=np.intp)
        return np.sort(np.concatenate([lookup[k] for k in subset.indices]))

    return column_map


def _run_core(data: Dataset, config: EstimationConfig, labels, p_eff: int,
              column_map=None, eval_mask=None, allow_tests: bool = True) -> SpvimResult:
    started = time.perf_counter()
    task = _measure_task(config.measure)
    if task != data.task:
        raise ConfigError(
            f"measure {config.measure!r} requires a {task} outcome, "
            f"but the dataset task is {data.task!r}"
        )

    n = data.n
    mask = np.ones(n, dtype=bool) if eval_mask is None else np.asarray(eval_mask, dtype=bool)
    n_eval = int(mask.sum())
    if eval_mask is not None:
        if n_eval == 1:
            raise SubpopulationSizeError(
                "single-observation local importance is not supported; "
                "inference requires a subpopulation, not a point"
            )
        if n_eval < RECOMMENDED_ROWS_PER_COORDINATE * (p_eff + 1):
            raise SubpopulationSizeError(
                f"predicate selects {n_eval} rows; need at least "
                f"{RECOMMENDED_ROWS_PER_COORDINATE * (p_eff + 1)}"
            )
    elif n_eval < RECOMMENDED_ROWS_PER_COORDINATE * (p_eff + 1):
        warnings.warn(
            f"n = {n_eval} is below the recommended "
            f"{RECOMMENDED_ROWS_PER_COORDINATE} x (p + 1) rows", RuntimeWarning,
        )

    m = math.ceil(config.gamma * n_eval)
    with _stage("subset sampling"):
        dist = sample_subsets(p_eff, m, _rng.derive_rng(config.seed, _rng.SAMPLING))
    dist = dist.with_gamma(dist.m / n_eval)

    folds = make_folds(n, config.scheme, _rng.derive_rng(config.seed, _rng.FOLDS),
                       y=data.y, stratify=(task == "binary"))
    evaluator = CrossFitEvaluator(
        data.X, data.y, task, config.learner, config.measure, folds,
        eval_mask=mask if eval_mask is not None else None,
        seed=config.seed, column_map=column_map,
    )
    with _stage("predictiveness estimation"):
        try:
            if config.workers > 1:
                with ThreadPoolExecutor(max_workers=config.workers) as pool:
                    estimates = list(pool.map(evaluator.evaluate, dist.unique_subsets))
            else:
                estimates = [evaluator.evaluate(s) for s in dist.unique_subsets]
        finally:
            evaluator.close()

    v = np.array([est.value for est in estimates])
    constraint = ConstraintSystem.for_dimension(p_eff, v[0], v[-1])
    with _stage("constrained solve"):
        solution = solve_cwls(dist, v, constraint, nonnegative=config.nonnegative)
    with _stage("covariance estimation"):
        cov = estimate_covariance(dist, estimates, solution, constraint)
    lower, upper = wald_intervals(solution, cov, config.alpha)

    tests = None
    if config.run_tests and allow_tests:
        with _stage("split-sample tests"):
            tests = _split_sample_tests(data, config, p_eff, column_map, eval_mask)

    diagnostics = {
        "n": n,
        "n_eval": n_eval,
        "p": p_eff,
        "m": dist.m,
        "gamma": dist.gamma,
        "n_unique_subsets": dist.n_unique,
        "n_models_fitted": evaluator.models_fitted,
        "kkt_condition_number": solution.kkt_condition_number,
        "constraint": (float(v[0]), float(v[-1])),
        "subset_values": [
            (s.indices, float(w), float(val))
            for s, w, val in zip(dist.unique_subsets, dist.masses, v)
        ],
        "dropped_rows": data.dropped_rows,
        "runtime_s": time.perf_counter() - started,
    }
    return SpvimResult(
        labels=tuple(labels),
        psi=solution.psi,
        lam=solution.lam,
        cov=cov,
        ci_lower=lower,
        ci_upper=upper,
        alpha=config.alpha,
        tests=tests,
        diagnostics=diagnostics,
    )


def _split_sample_tests(data: Dataset, config: EstimationConfig, p_eff: int,
                        column_map, eval_mask) -> tuple:
    """Per-feature split-sample tests via two disjoint sub-fits.

    Rows split in half (stratified by outcome for binary tasks); the
    first portion receives a full importance fit, the second a
    null-predictiveness fit only.
    """
    n = data.n
    rng = _rng.derive_rng(config.seed, _rng.TEST_SPLIT)
    half = CrossFitScheme(kind="split", train_fraction=0.5)
    assignment = make_folds(n, half, rng, y=data.y, stratify=(data.task == "binary"))
    rows1 = np.flatnonzero(assignment < 0)
    rows2 = np.flatnonzero(assignment >= 0)

    def restrict(rows, seed):
        sub = Dataset(
            X=data.X[rows], y=data.y[rows], feature_names=data.feature_names,
            outcome_name=data.outcome_name, task=data.task,
            dropped_rows=data.dropped_rows,
        )
        sub_mask = None if eval_mask is None else np.asarray(eval_mask, dtype=bool)[rows]
        return sub, sub_mask, replace(config, seed=seed, run_tests=False)

    data1, mask1, config1 = restrict(rows1, _rng.derive_seed(config.seed, _rng.TEST_SPLIT, 1))
    portion1 = _run_core(data1, config1, [""] * (p_eff + 1), p_eff,
                         column_map=column_map, eval_mask=mask1, allow_tests=False)

    data2, mask2, config2 = restrict(rows2, _rng.derive_seed(config.seed, _rng.TEST_SPLIT, 2))
    task = data.task
    folds2 = make_folds(data2.n, config.scheme,
                        _rng.derive_rng(config2.seed, _rng.FOLDS),
                        y=data2.y, stratify=(task == "binary"))
    evaluator2 = CrossFitEvaluator(
        data2.X, data2.y, task, LearnerSpec("mean_only"), config.measure, folds2,
        eval_mask=mask2, seed=config2.seed, column_map=column_map,
    )
    try:
        portion2 = evaluator2.evaluate(FeatureSubset.empty(p_eff))
    finally:
        evaluator2.close()

    alpha = config.alpha / p_eff if config.bonferroni else config.alpha
    null_variance = null_fit_variance(portion2, measure=config.measure)
    return tuple(
        spvim_test(portion1, portion2, j, delta=config.delta, alpha=alpha,
                   null_variance=null_variance)
        for j in range(1, p_eff + 1)
    )


def estimate_spvim(data: Dataset, config: EstimationConfig) -> SpvimResult:
    """Estimate per-feature importance with inference on ``data``."""
    if config.groups is not None:
        return group_spvim(data, config.groups, config)
    if config.subpopulation is not None:
        return subpopulation_spvim(data, config.subpopulation, config)
    labels = ("(null)",) + tuple(data.feature_names)
    return _run_core(data, config, labels, data.p)


def group_spvim(data: Dataset, partition, config: EstimationConfig) -> SpvimResult:
    """Importance of disjoint covering feature groups.

    Each group behaves as one meta-feature: a sampled meta-subset maps
    to the union of its groups' columns before fitting.
    """
    partition = tuple(tuple(int(j) for j in g) for g in partition)
    column_map = _group_column_map(partition, data.p)
    config = replace(config, groups=None)
    labels = ("(null)",) + tuple(
        "+".join(data.feature_names[j - 1] for j in g) for g in partition
    )
    return _run_core(data, config, labels, len(partition), column_map=column_map)


def subpopulation_spvim(data: Dataset, predicate, config: EstimationConfig) -> SpvimResult:
    """Importance restricted to rows matching a covariate predicate.

    Learners train on all rows; predictiveness and influence are
    evaluated only on the selected rows, and inference uses the
    restricted row count.  Predicates reference covariates only.
    """
    config = replace(config, subpopulation=None)
    mask = _eval_mask(data, predicate)
    labels = ("(null)",) + tuple(data.feature_names)
    return _run_core(data, config, labels, data.p, eval_mask=mask)
