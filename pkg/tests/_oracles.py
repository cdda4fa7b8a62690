"""Independent reference implementations used only by tests.

Everything here is deliberately written from first principles (exact
rational arithmetic, weighted empirical functionals, brute-force
enumeration) and never calls into the package's own computation paths,
so agreement is evidence rather than tautology.
"""

from fractions import Fraction
from itertools import combinations
from math import comb

import numpy as np


def all_subsets(p):
    """All subsets of {1..p} ordered by (size, indices)."""
    out = []
    for k in range(p + 1):
        out.extend(frozenset(c) for c in combinations(range(1, p + 1), k))
    return out


def shapley_exact_fraction(values, p):
    """Shapley attribution via the classical weighted-gain sum in exact rationals.

    ``values`` maps each frozenset subset to its game value (floats are
    converted exactly).  Returns a list of Fractions of length p + 1.
    """
    subsets = all_subsets(p)
    val = {s: Fraction(values[s]) for s in subsets}
    psi = [val[frozenset()]]
    for j in range(1, p + 1):
        total = Fraction(0)
        for s in subsets:
            if j in s:
                continue
            weight = Fraction(1, p * comb(p - 1, len(s)))
            total += weight * (val[s | {j}] - val[s])
        psi.append(total)
    return psi


def one_hot_closed_form(p, k_subset, j):
    """Closed-form attribution of feature ``j`` for a one-hot game.

    The game is 1 on ``k_subset`` (a frozenset) and 0 elsewhere.
    Exact rational output.
    """
    size = len(k_subset)
    if size == 0:
        return Fraction(-1, p)
    if size == p:
        return Fraction(1, p)
    if j in k_subset:
        return Fraction(1, p * comb(p - 1, size - 1))
    return Fraction(-1, p * comb(p - 1, size))


def kernel_law_probabilities(p):
    """Exact sampling probability of every subset under the kernel law."""
    subsets = all_subsets(p)
    weights = []
    for s in subsets:
        k = len(s)
        if k in (0, p):
            weights.append(Fraction(1))
        else:
            weights.append(Fraction(1, comb(p - 2, k - 1)))
    total = sum(weights)
    return subsets, [w / total for w in weights]


# -- weighted measure evaluation for perturbation oracles -------------------

def weighted_r_squared(f, y, w):
    w = np.asarray(w, dtype=float)
    w = w / w.sum()
    mu = float(w @ y)
    var = float(w @ (y - mu) ** 2)
    mse = float(w @ (y - f) ** 2)
    return 1.0 - mse / var


def weighted_accuracy(f, y, w):
    w = np.asarray(w, dtype=float)
    w = w / w.sum()
    cls = (np.asarray(f) >= 0.5).astype(float)
    return float(w @ (cls == y).astype(float))


def weighted_auc(f, y, w):
    w = np.asarray(w, dtype=float)
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    w1 = w * (y == 1.0)
    w0 = w * (y == 0.0)
    gt = (f[:, None] > f[None, :]).astype(float) + 0.5 * (f[:, None] == f[None, :])
    num = float(w1 @ gt @ w0)
    return num / (w1.sum() * w0.sum())


WEIGHTED_MEASURES = {
    "r_squared": weighted_r_squared,
    "accuracy": weighted_accuracy,
    "auc": weighted_auc,
}


def influence_by_perturbation(kind, f, y, eps=1e-6):
    """Gateaux-derivative oracle: reweight toward each observation.

    Central difference of the weighted measure along the direction that
    moves mass from the empirical distribution onto observation ``i``.
    """
    n = len(y)
    measure = WEIGHTED_MEASURES[kind]
    base = np.full(n, 1.0 / n)
    out = np.empty(n)
    for i in range(n):
        direction = -base.copy()
        direction[i] += 1.0
        up = measure(f, y, base + eps * direction)
        down = measure(f, y, base - eps * direction)
        out[i] = (up - down) / (2.0 * eps)
    return out
