"""Constrained weighted least squares over sampled subsets.

The importance vector solves

    minimize   || sqrt(W) (Z psi - v) ||^2
    subject to G psi = c,

where ``Z`` stacks the binary subset encodings, ``W`` holds the
empirical subset masses, ``v`` the per-subset predictiveness estimates,
and the two constraint rows pin the intercept to the null predictiveness
and the coordinate sum to total-minus-null predictiveness.  The solve
inverts the symmetric KKT system

    [ 2 Z'WZ  G' ] [ psi ]   [ 2 Z'W v ]
    [   G     0  ] [ lam ] = [    c    ].

:func:`solution_sensitivity` returns the linear map from ``v`` to
``psi`` (the constraint vector ``c`` is itself a selection of two
entries of ``v``); it is the building block for the covariance
estimator and reproduces the solve exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import IllPosedError, UnderIdentifiedError
from .subsets import EmpiricalSubsetDistribution, FeatureSubset

KKT_CONDITION_LIMIT = 1e10
CONSTRAINT_TOL = 1e-10


@dataclass(frozen=True)
class ConstraintSystem:
    """Equality constraints ``G psi = c``.

    ``G`` has two rows: the encodings of the empty and full subsets.
    ``c`` carries the null and total predictiveness values.
    """

    G: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if G.ndim != 2 or G.shape[0] != 2 or c.shape != (2,):
            raise ValueError("G must be 2 x (p+1) and c length 2")
        if np.linalg.matrix_rank(G) != 2:
            raise ValueError("constraint matrix must have full row rank")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "c", c)

    @property
    def p(self) -> int:
        return self.G.shape[1] - 1

    @classmethod
    def for_dimension(cls, p: int, v_empty: float, v_full: float) -> "ConstraintSystem":
        G = np.vstack([
            FeatureSubset.empty(p).encode(),
            FeatureSubset.full(p).encode(),
        ])
        return cls(G, np.array([v_empty, v_full], dtype=float))


@dataclass(frozen=True)
class CwlsSolution:
    """Solution of the constrained solve.

    ``psi[0]`` equals the null predictiveness and the remaining
    coordinates sum to total minus null, both enforced by the
    constraints.  ``kkt_condition_number`` is the 2-norm condition of
    the assembled KKT matrix.
    """

    psi: np.ndarray
    lam: np.ndarray
    kkt_condition_number: float


def nullspace_qr(constraint: ConstraintSystem):
    """QR decomposition of the transposed constraint matrix.

    Returns ``(U1, U2, R)`` with ``[U1 U2]`` orthonormal,
    ``G.T = U1 @ R``, and the columns of ``U2`` spanning the null space
    of ``G``.  For ``p = 1`` the null space is empty and ``U2`` has zero
    columns.
    """
    Q, R = np.linalg.qr(constraint.G.T, mode="complete")
    return Q[:, :2], Q[:, 2:], R[:2, :]


def _kkt_system(dist: EmpiricalSubsetDistribution, constraint: ConstraintSystem):
    Z = dist.encoding_matrix()
    w = dist.masses
    p = dist.p
    if constraint.G.shape[1] != p + 1:
        raise ValueError("constraint dimension does not match distribution")
    A = Z.T @ (w[:, None] * Z)
    K = np.zeros((p + 3, p + 3))
    K[: p + 1, : p + 1] = 2.0 * A
    K[: p + 1, p + 1 :] = constraint.G.T
    K[p + 1 :, : p + 1] = constraint.G
    return Z, w, K


def solve_cwls(
    dist: EmpiricalSubsetDistribution,
    v,
    constraint: ConstraintSystem,
    nonnegative: bool = False,
) -> CwlsSolution:
    """Solve the constrained weighted least-squares problem.

    ``v`` holds one predictiveness value per unique subset, aligned with
    ``dist.unique_subsets``.  Set ``nonnegative=True`` to additionally
    require each feature coordinate to be >= 0 (solved by projected
    pairwise coordinate descent within the sum constraint); by default
    negative coordinates are reported as-is.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (dist.n_unique,):
        raise ValueError(
            f"expected {dist.n_unique} predictiveness values, got {v.shape}"
        )
    if not np.all(np.isfinite(v)):
        raise ValueError("predictiveness values must be finite")
    p = dist.p
    if dist.n_unique < p + 1:
        raise UnderIdentifiedError(
            f"{dist.n_unique} unique subsets cannot identify {p + 1} coordinates"
        )

    Z, w, K = _kkt_system(dist, constraint)
    cond = float(np.linalg.cond(K))
    if not np.isfinite(cond) or cond > KKT_CONDITION_LIMIT:
        raise IllPosedError(
            f"KKT condition number {cond:.3e} exceeds {KKT_CONDITION_LIMIT:.0e}; "
            "sample more subsets"
        )
    rhs = np.concatenate([2.0 * (Z.T @ (w * v)), constraint.c])
    sol = scipy.linalg.solve(K, rhs, assume_a="sym")
    psi, lam = sol[: p + 1], sol[p + 1 :]

    if nonnegative:
        psi = _nonnegative_solve(Z, w, v, constraint, psi)
        A = Z.T @ (w[:, None] * Z)
        lam, *_ = np.linalg.lstsq(
            constraint.G.T, 2.0 * (Z.T @ (w * v)) - 2.0 * (A @ psi), rcond=None
        )

    gap = np.abs(constraint.G @ psi - constraint.c).max()
    if gap > CONSTRAINT_TOL * (1.0 + np.abs(constraint.c).max()):
        raise IllPosedError(f"constraint residual {gap:.3e} after solve")
    return CwlsSolution(psi=psi, lam=lam, kkt_condition_number=cond)


def _project_capped_simplex(x: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) = total}``."""
    # bisection on the shift in max(x - t, 0)
    lo = x.min() - total / len(x) - 1.0
    hi = x.max()
    for _ in range(100):
        t = 0.5 * (lo + hi)
        s = np.maximum(x - t, 0.0).sum()
        if s > total:
            lo = t
        else:
            hi = t
    return np.maximum(x - 0.5 * (lo + hi), 0.0)


def _nonnegative_solve(Z, w, v, constraint, psi_init, max_sweeps=500, tol=1e-12):
    """Feature coordinates >= 0 under the fixed intercept and sum constraints.

    Pairwise coordinate descent: each update moves mass between two
    coordinates (directions ``e_i - e_j`` span the sum-constraint null
    space) with the step clipped at the nonnegativity bounds.
    """
    v_empty, v_full = constraint.c
    total = v_full - v_empty
    if total < -1e-12:
        raise IllPosedError(
            "nonnegative solve infeasible: total predictiveness below null"
        )
    total = max(total, 0.0)
    Zf = Z[:, 1:]
    r = v - v_empty
    Q = Zf.T @ (w[:, None] * Zf)
    b = Zf.T @ (w * r)
    x = _project_capped_simplex(np.asarray(psi_init[1:], dtype=float), total)
    g = 2.0 * (Q @ x - b)
    pf = len(x)
    scale = 1.0 + abs(total)
    for _ in range(max_sweeps):
        biggest = 0.0
        for i in range(pf):
            for j in range(i + 1, pf):
                denom = 2.0 * (Q[i, i] + Q[j, j] - 2.0 * Q[i, j])
                if denom <= 0.0:
                    continue
                t = (g[j] - g[i]) / denom
                t = min(max(t, -x[i]), x[j])
                if t == 0.0:
                    continue
                x[i] += t
                x[j] -= t
                g += 2.0 * t * (Q[:, i] - Q[:, j])
                biggest = max(biggest, abs(t))
        if biggest < tol * scale:
            break
    return np.concatenate([[v_empty], x])


def solution_sensitivity(
    dist: EmpiricalSubsetDistribution, constraint: ConstraintSystem
) -> np.ndarray:
    """Linear map ``M`` with ``psi = M @ v`` for the constrained solve.

    Accounts for both routes by which the predictiveness vector enters
    the solution: the weighted objective and the two constraint values
    (the null and full entries of ``v``).
    """
    Z, w, K = _kkt_system(dist, constraint)
    p = dist.p
    selector = np.zeros((2, dist.n_unique))
    empty_pos = 0
    full_pos = dist.n_unique - 1
    selector[0, empty_pos] = 1.0
    selector[1, full_pos] = 1.0
    rhs = np.vstack([2.0 * (Z.T * w[None, :]), selector])
    try:
        sol = scipy.linalg.solve(K, rhs, assume_a="sym")
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - guarded upstream
        raise IllPosedError(f"singular KKT system: {exc}") from exc
    return sol[: p + 1, :]


def reparameterized_components(constraint: ConstraintSystem, psi: np.ndarray):
    """Split ``psi`` into constraint-fixed and free null-space parts.

    Returns ``(theta1, theta2)`` with
    ``psi = U1 @ theta1 + U2 @ theta2`` where ``theta1`` solves
    ``R.T theta1 = c`` and is fully determined by the constraints.
    """
    U1, U2, R = nullspace_qr(constraint)
    theta1 = scipy.linalg.solve_triangular(R.T, constraint.c, lower=True)
    theta2 = U2.T @ psi
    return theta1, theta2
