"""Predictiveness measures and their per-observation influence values.

A measure scores a prediction vector against observed outcomes; larger
is better.  Three measures are supported:

* ``r_squared`` for continuous outcomes: one minus mean squared error
  over outcome variance (population variance of the evaluation set).
  Held-out values may be slightly negative and are not clipped.
* ``accuracy`` for binary outcomes: fraction classified correctly at
  probability threshold 0.5.
* ``auc`` for binary outcomes: the Mann-Whitney statistic, ties counted
  one half.

:func:`measure_influence` returns the first-order (Gateaux-derivative)
contribution of each evaluation observation to the measure, with all
nuisance quantities plugged in from the same evaluation set, so the
influence values are exactly mean-zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateOutcomeError

MEASURE_KINDS = ("r_squared", "accuracy", "auc")
CLASSIFICATION_THRESHOLD = 0.5


@dataclass(frozen=True)
class PredictivenessMeasure:
    """A named predictiveness functional; always higher-is-better."""

    kind: str
    higher_is_better: bool = True

    def __post_init__(self):
        if self.kind not in MEASURE_KINDS:
            raise ValueError(f"unknown measure {self.kind!r}; choose from {MEASURE_KINDS}")

    @property
    def outcome_task(self) -> str:
        return "regression" if self.kind == "r_squared" else "binary"

    @property
    def null_value_is_deterministic(self) -> bool:
        """Whether the no-covariate predictiveness is population-fixed.

        r_squared is identically 0 and AUC identically one half for any
        outcome distribution, so the first-order influence of a null
        fit degenerates; accuracy's null value is the majority-class
        rate, a genuine population quantity.
        """
        return self.kind in ("r_squared", "auc")


def as_measure(measure) -> PredictivenessMeasure:
    if isinstance(measure, PredictivenessMeasure):
        return measure
    return PredictivenessMeasure(str(measure))


def _check_inputs(predictions, outcomes):
    f = np.asarray(predictions, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    if f.shape != y.shape or f.ndim != 1:
        raise ValueError("predictions and outcomes must be 1-d of equal length")
    if len(y) < 2:
        raise ValueError("need at least 2 evaluation observations")
    return f, y


def _check_binary(y):
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DegenerateOutcomeError("binary measures require outcomes in {0, 1}")
    n1 = int(y.sum())
    if n1 == 0 or n1 == len(y):
        raise DegenerateOutcomeError("both outcome classes must be present")
    return n1


def _auc_and_class_cdfs(f, y):
    """AUC plus the empirical below-score fractions for each class.

    ``g0[i]`` is the fraction of class-0 scores strictly below ``f[i]``
    plus half the ties; ``g1[i]`` the same against class-1 scores.
    """
    scores1 = np.sort(f[y == 1.0])
    scores0 = np.sort(f[y == 0.0])
    n1, n0 = len(scores1), len(scores0)

    def below(sorted_scores, t):
        lo = np.searchsorted(sorted_scores, t, side="left")
        hi = np.searchsorted(sorted_scores, t, side="right")
        return (lo + 0.5 * (hi - lo)) / len(sorted_scores)

    g0 = below(scores0, f)
    g1 = below(scores1, f)
    auc = float(np.mean(g0[y == 1.0]))
    return auc, g0, g1, n1, n0


def measure_value(measure, predictions, outcomes) -> float:
    """Evaluate a predictiveness measure on an evaluation set."""
    m = as_measure(measure)
    f, y = _check_inputs(predictions, outcomes)

    if m.kind == "r_squared":
        var = float(np.mean((y - y.mean()) ** 2))
        if var <= 0.0:
            raise DegenerateOutcomeError("zero outcome variance; r_squared undefined")
        mse = float(np.mean((y - f) ** 2))
        return 1.0 - mse / var

    if m.kind == "accuracy":
        _check_binary(y)
        cls = (f >= CLASSIFICATION_THRESHOLD).astype(float)
        return float(np.mean(cls == y))

    _check_binary(y)
    auc, *_ = _auc_and_class_cdfs(f, y)
    return auc


def measure_influence(measure, predictions, outcomes) -> np.ndarray:
    """Per-observation influence values of the measure; exactly mean-zero.

    All nuisances (means, variances, class rates, empirical score
    distributions) are the evaluation-set plug-ins, so the first-order
    reconstruction ``value + mean(influence)`` returns the value itself.
    """
    m = as_measure(measure)
    f, y = _check_inputs(predictions, outcomes)

    if m.kind == "r_squared":
        mu = y.mean()
        var = float(np.mean((y - mu) ** 2))
        if var <= 0.0:
            raise DegenerateOutcomeError("zero outcome variance; r_squared undefined")
        sq_err = (y - f) ** 2
        mse = float(sq_err.mean())
        centered_sq = (y - mu) ** 2
        return -(sq_err - mse) / var + (mse / var**2) * (centered_sq - var)

    if m.kind == "accuracy":
        _check_binary(y)
        cls = (f >= CLASSIFICATION_THRESHOLD).astype(float)
        correct = (cls == y).astype(float)
        return correct - correct.mean()

    _check_binary(y)
    auc, g0, g1, n1, n0 = _auc_and_class_cdfs(f, y)
    pi1 = n1 / len(y)
    pi0 = n0 / len(y)
    term1 = (y / pi1) * g0
    term0 = ((1.0 - y) / pi0) * (1.0 - g1)
    return term1 + term0 - (y / pi1 + (1.0 - y) / pi0) * auc
