"""Covariance estimation, Wald intervals, and the split-sample test.

The sampled estimator has two independent noise sources, and its
asymptotic covariance is their sum:

* an observation part: the per-row influence of the predictiveness
  vector pushed through the linear solution map of the constrained
  solve (the map covers both the weighted objective and the two
  constraint entries, so averaging these contributions reproduces the
  solve's first-order perturbation exactly);
* a subset-sampling part, damped by the draws-per-observation ratio
  ``gamma``: residual-weighted null-space directions of the constraint,
  whose covariance is taken across the subset draws.

A feature with truly null importance degenerates the observation part,
so plain Wald intervals are unreliable exactly at the null; the
:func:`spvim_test` sample-splitting test remains valid there and is the
advertised way to test the null.  For measures whose null
predictiveness is deterministic (r_squared is identically 0 at the
population level) the second portion's variance can be near zero; the
test surfaces a degenerate denominator rather than guessing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .crossfit import PredictivenessEstimate
from .errors import DegenerateVarianceError, IllPosedError
from .solver import ConstraintSystem, CwlsSolution, nullspace_qr, solution_sensitivity
from .subsets import EmpiricalSubsetDistribution


@dataclass(frozen=True)
class CovarianceEstimate:
    """Estimated asymptotic covariance of the importance vector.

    ``sigma = phi1_part + phi2_part / gamma`` exactly as stored;
    dividing ``sigma`` by ``n`` gives the finite-sample covariance
    scale.  ``n`` is the number of aligned evaluation rows.
    """

    sigma: np.ndarray
    gamma: float
    n: int
    phi1_part: np.ndarray
    phi2_part: np.ndarray

    def standard_errors(self) -> np.ndarray:
        diag = np.diag(self.sigma).copy()
        if np.any(diag < 0):
            warnings.warn("negative covariance diagonal clamped to 0", RuntimeWarning)
            diag = np.maximum(diag, 0.0)
        return np.sqrt(diag / self.n)


@dataclass(frozen=True)
class TestResult:
    """One-sided split-sample test of H0: importance_j <= delta."""

    feature: int
    statistic: float
    p_value: float
    delta: float
    alpha: float
    reject: bool
    split_sizes: tuple

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p_value must lie in [0, 1]")
        if self.reject != (self.p_value < self.alpha):
            raise ValueError("reject flag inconsistent with p_value and alpha")


def estimate_covariance(
    dist: EmpiricalSubsetDistribution,
    estimates,
    solution: CwlsSolution,
    constraint: ConstraintSystem,
    n_eval: int | None = None,
) -> CovarianceEstimate:
    """Two-part covariance estimate from aligned influence vectors.

    ``estimates`` holds one :class:`PredictivenessEstimate` per unique
    subset (a mapping keyed by subset, or a sequence aligned with
    ``dist.unique_subsets``); all influence vectors must share the same
    evaluation rows.  ``dist.gamma`` must be set (draws per evaluation
    row).
    """
    aligned = _aligned_estimates(dist, estimates)
    lengths = {est.n_eval for est in aligned}
    if len(lengths) != 1:
        raise ValueError("influence vectors are not aligned across subsets")
    n = n_eval if n_eval is not None else lengths.pop()
    if dist.gamma is None:
        raise ValueError("distribution gamma (draws per evaluation row) is not set")
    gamma = dist.gamma
    p = dist.p

    # observation part: influence pushed through the solution map
    vdot = np.column_stack([est.influence for est in aligned])
    M = solution_sensitivity(dist, constraint)
    contributions = vdot @ M.T
    phi1 = np.cov(contributions, rowvar=False, ddof=1)

    # subset-sampling part: weighted residuals in constraint null space
    Z = dist.encoding_matrix()
    w = dist.masses
    _, U2, _ = nullspace_qr(constraint)
    if U2.shape[1] == 0:
        warnings.warn(
            "single feature: subset-sampling covariance part is identically zero",
            RuntimeWarning,
        )
        phi2 = np.zeros((p + 1, p + 1))
    else:
        A = Z.T @ (w[:, None] * Z)
        Vm = U2.T @ A @ U2
        E = Z @ U2
        v = np.array([est.value for est in aligned])
        residual = Z @ solution.psi - v
        try:
            D = np.linalg.solve(Vm, E.T).T
        except np.linalg.LinAlgError as exc:
            raise IllPosedError(f"singular null-space normal matrix: {exc}") from exc
        contributions2 = -(D * residual[:, None]) @ U2.T
        mean2 = w @ contributions2
        centered = contributions2 - mean2
        phi2 = (centered.T * w) @ centered
        if dist.m > 1:
            phi2 *= dist.m / (dist.m - 1)

    sigma = phi1 + phi2 / gamma
    return CovarianceEstimate(sigma=sigma, gamma=float(gamma), n=int(n),
                              phi1_part=phi1, phi2_part=phi2)


def _aligned_estimates(dist, estimates):
    if hasattr(estimates, "keys"):
        try:
            return [estimates[s] for s in dist.unique_subsets]
        except KeyError as exc:
            raise ValueError(f"missing predictiveness estimate for subset {exc}") from exc
    aligned = list(estimates)
    if len(aligned) != dist.n_unique:
        raise ValueError("one predictiveness estimate per unique subset required")
    return aligned


def wald_intervals(solution, cov: CovarianceEstimate, alpha: float):
    """Two-sided normal confidence intervals at level ``1 - alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    psi = solution.psi if isinstance(solution, CwlsSolution) else np.asarray(solution, dtype=float)
    se = cov.standard_errors()
    if not np.all(np.isfinite(se)):
        raise ValueError("non-finite standard errors")
    z = norm.ppf(1.0 - alpha / 2.0)
    return psi - z * se, psi + z * se


def null_fit_variance(estimate: PredictivenessEstimate, measure=None,
                      train_rows: int | None = None) -> float:
    """Variance estimator for a null-predictiveness fit (times n).

    For measures whose null predictiveness is population-deterministic
    (r_squared is identically 0, AUC identically one half), the
    first-order influence degenerates and the cross-fitted value
    fluctuates only at second order, through the mismatch between
    training-fold and evaluation-fold outcome means.  For K-fold
    fitting that mismatch is asymptotically a scaled chi-square with
    K - 1 degrees of freedom, giving ``n x Var = 2 K^4 / ((K-1)^3 n)``;
    a single train/validation split gives
    ``2 n (1/n_train + 1/n_eval)^2``.  Non-degenerate measures keep the
    usual first-order influence variance.  Without a ``measure``, the
    larger of the two terms is returned.
    """
    from .measures import as_measure

    first_order = estimate.variance()
    n = estimate.n_eval
    k = len(np.unique(estimate.fold_assignment))
    if k >= 2:
        second_order = 2.0 * k**4 / ((k - 1) ** 3 * n)
    else:
        n_train = train_rows if train_rows is not None else n
        second_order = 2.0 * n * (1.0 / n_train + 1.0 / n) ** 2
    if measure is None:
        return max(first_order, second_order)
    if as_measure(measure).null_value_is_deterministic:
        return second_order
    return first_order


def spvim_test(
    portion1,
    portion2: PredictivenessEstimate,
    j: int,
    delta: float = 0.0,
    alpha: float = 0.05,
    null_variance: float | None = None,
) -> TestResult:
    """Sample-splitting test of H0: importance of feature ``j`` <= delta.

    ``portion1`` is a full importance fit on the first portion (any
    object exposing ``psi`` and a ``cov`` with ``sigma`` and ``n``);
    ``portion2`` a null-predictiveness fit on the disjoint remainder.
    The statistic compares feature-plus-null importance from portion 1
    against null importance from portion 2, studentized by
    ``sqrt(var1/n1 + 2*var2/n2)``.  ``null_variance`` overrides the
    default :func:`null_fit_variance` estimate for the second portion.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    psi = np.asarray(portion1.psi, dtype=float)
    p = len(psi) - 1
    if not 1 <= j <= p:
        raise ValueError(f"feature index {j} out of range [1, {p}]")
    n1 = portion1.cov.n
    n2 = portion2.n_eval
    psi_plus = psi[j] + psi[0]
    var_j = float(portion1.cov.sigma[j, j])
    psi_null = portion2.value
    var_null = null_variance if null_variance is not None else null_fit_variance(portion2)

    denom_sq = var_j / n1 + 2.0 * var_null / n2
    if denom_sq <= 0.0:
        raise DegenerateVarianceError(
            "zero test denominator; use the AUC measure or a larger second portion"
        )
    statistic = (psi_plus - psi_null - delta) / np.sqrt(denom_sq)
    p_value = float(norm.sf(statistic))
    return TestResult(
        feature=j,
        statistic=float(statistic),
        p_value=p_value,
        delta=float(delta),
        alpha=float(alpha),
        reject=bool(p_value < alpha),
        split_sizes=(int(n1), int(n2)),
    )
