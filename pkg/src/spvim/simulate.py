"""Synthetic data-generating processes for tests and experiments.

Two families:

* ``linear``: independent standard-normal features, outcome a linear
  combination plus Gaussian noise.  The induced importance values have
  a closed form (the game is additive), exposed by
  :func:`linear_true_importance`.
* ``paper_sim``: the correlated-Gaussian benchmark with sign/step
  signal components on features 1, 3, and 5 and correlated proxy
  features 11-14 (correlations 0.7, 0.3, 0.3, 0.05); all remaining
  features are pure noise.  Requires ``p >= 14``.
"""

from __future__ import annotations

import numpy as np

from . import _rng
from .data import Dataset
from .errors import ConfigError

PAPER_SIM_MIN_P = 14
_STEP_CUTS = (-4.0, -2.0, 0.0, 2.0, 4.0)
_STEP_LEVELS = (-6.0, -4.0, -2.0, 0.0, 2.0, 4.0)
_ALT_LEVELS = (-1.0, 1.0, -1.0, 1.0, -1.0, 1.0)


def _piecewise(x: np.ndarray, levels) -> np.ndarray:
    """Step function over the bins (-inf,-4], (-4,-2], ..., (4, inf)."""
    idx = np.searchsorted(np.asarray(_STEP_CUTS), x, side="left")
    return np.asarray(levels, dtype=float)[idx]


def signal_sign(x: np.ndarray) -> np.ndarray:
    return np.sign(x)


def signal_steps(x: np.ndarray) -> np.ndarray:
    """Monotone six-level staircase: -6, -4, -2, 0, 2, 4."""
    return _piecewise(x, _STEP_LEVELS)


def signal_alternating(x: np.ndarray) -> np.ndarray:
    """Alternating +-1 over the same six bins."""
    return _piecewise(x, _ALT_LEVELS)


def paper_sim_covariance(p: int) -> np.ndarray:
    """Unit-variance Gaussian covariance with the benchmark's proxy links."""
    if p < PAPER_SIM_MIN_P:
        raise ConfigError(f"paper_sim requires p >= {PAPER_SIM_MIN_P}, got {p}")
    cov = np.eye(p)
    for a, b, rho in ((1, 11, 0.7), (3, 12, 0.3), (3, 13, 0.3), (5, 14, 0.05)):
        cov[a - 1, b - 1] = cov[b - 1, a - 1] = rho
    return cov


def paper_sim_signal(X: np.ndarray) -> np.ndarray:
    """Noise-free outcome surface of the benchmark."""
    return signal_sign(X[:, 0]) + signal_steps(X[:, 2]) + signal_alternating(X[:, 4])


def simulate(dgp_spec: dict, n: int, seed: int) -> Dataset:
    """Draw a synthetic dataset from a DGP specification.

    ``dgp_spec`` is ``{"kind": "linear", "p": ..., "coefficients": [...],
    "noise": ...}`` or ``{"kind": "paper_sim", "p": ...}``.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    kind = dgp_spec.get("kind")
    rng = _rng.derive_rng(seed, _rng.SIMULATE)

    if kind == "linear":
        coef = np.asarray(dgp_spec.get("coefficients", ()), dtype=float)
        p = int(dgp_spec.get("p", len(coef)))
        if p < 1:
            raise ConfigError("linear DGP needs p >= 1")
        if len(coef) != p:
            raise ConfigError(f"expected {p} coefficients, got {len(coef)}")
        noise = float(dgp_spec.get("noise", 1.0))
        if noise < 0:
            raise ConfigError("noise must be >= 0")
        X = rng.standard_normal((n, p))
        y = X @ coef + noise * rng.standard_normal(n)
    elif kind == "paper_sim":
        p = int(dgp_spec.get("p", PAPER_SIM_MIN_P))
        cov = paper_sim_covariance(p)
        X = rng.standard_normal((n, p)) @ np.linalg.cholesky(cov).T
        y = paper_sim_signal(X) + rng.standard_normal(n)
    else:
        raise ConfigError(f"unknown DGP kind {dgp_spec.get('kind')!r}")

    names = tuple(f"x{j}" for j in range(1, p + 1))
    return Dataset(X=X, y=y, feature_names=names, outcome_name="y", task="regression")


def linear_true_importance(coefficients, noise: float) -> np.ndarray:
    """Population importance vector for the linear DGP.

    With independent features the predictiveness game is additive, so
    feature ``j`` receives exactly its variance-explained share
    ``c_j^2 / (sum(c^2) + noise^2)``; the leading entry (null
    predictiveness) is 0.
    """
    coef = np.asarray(coefficients, dtype=float)
    total = float(coef @ coef) + float(noise) ** 2
    out = np.zeros(len(coef) + 1)
    if total > 0:
        out[1:] = coef**2 / total
    return out
