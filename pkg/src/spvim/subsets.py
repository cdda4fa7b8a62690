"""Feature subsets, Shapley kernel weights, and the subset sampler.

A cooperative game over ``p`` features assigns a value to every subset
``s`` of ``{1, ..., p}``.  This module provides:

* :class:`FeatureSubset` and its binary encoding (intercept column plus
  one indicator per feature),
* the Shapley kernel weights ``1 / C(p-2, |s|-1)`` (weight 1 for the
  empty and full subsets) and the induced sampling distribution over
  subsets,
* a two-stage sampler producing an :class:`EmpiricalSubsetDistribution`,
* :func:`exact_shapley`, the all-subsets oracle used to validate the
  sampled weighted-least-squares estimator.

Subsets are ordered by (size, then indices); the empty set is always
first and the full set last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, SamplingBudgetError

EXACT_SHAPLEY_CAP = 20
RESAMPLING_BATCHES = 10


@dataclass(frozen=True, order=True)
class FeatureSubset:
    """An index set ``s`` within ``{1, ..., p}``.

    Indices are 1-based, strictly increasing, and bounded by ``p``.
    Instances sort by (size, indices), the canonical subset ordering.
    """

    sort_index: tuple = field(init=False, repr=False)
    indices: tuple
    p: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if any(i < 1 or i > self.p for i in idx):
            raise ValueError(f"indices {idx} not all within [1, {self.p}]")
        if any(a >= b for a, b in zip(idx, idx[1:])):
            raise ValueError(f"indices {idx} must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "sort_index", (len(idx), idx, self.p))

    @classmethod
    def empty(cls, p: int) -> "FeatureSubset":
        return cls((), p)

    @classmethod
    def full(cls, p: int) -> "FeatureSubset":
        return cls(tuple(range(1, p + 1)), p)

    @classmethod
    def of(cls, indices: Iterable[int], p: int) -> "FeatureSubset":
        return cls(tuple(sorted(set(int(i) for i in indices))), p)

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def is_empty(self) -> bool:
        return not self.indices

    @property
    def is_full(self) -> bool:
        return len(self.indices) == self.p

    def encode(self) -> np.ndarray:
        """Binary encoding of length ``p + 1``; entry 0 is always 1."""
        z = np.zeros(self.p + 1)
        z[0] = 1.0
        for j in self.indices:
            z[j] = 1.0
        return z

    def columns(self) -> np.ndarray:
        """0-based column positions of the member features."""
        return np.asarray(self.indices, dtype=np.intp) - 1

    def __contains__(self, j: int) -> bool:
        return j in self.indices

    def __iter__(self):
        return iter(self.indices)

    def __len__(self) -> int:
        return len(self.indices)


def subset_encode(subset: FeatureSubset) -> np.ndarray:
    """Binary encoding of ``subset``: ``(1, I(1 in s), ..., I(p in s))``."""
    return subset.encode()


def kernel_weight(k: int, p: int) -> float:
    """Shapley kernel weight for a subset of size ``k`` among ``p`` features.

    Returns 1 for ``k`` in ``{0, p}`` and ``1 / C(p-2, k-1)`` otherwise,
    evaluated in log space so large ``p`` stays finite.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if k < 0 or k > p:
        raise ValueError(f"subset size {k} out of range [0, {p}]")
    if k == 0 or k == p:
        return 1.0
    if p <= 1000:
        # exact integer binomial, correctly rounded on division
        return 1.0 / math.comb(p - 2, k - 1)
    # log C(p-2, k-1) = lgamma(p-1) - lgamma(k) - lgamma(p-k)
    return math.exp(-(math.lgamma(p - 1) - math.lgamma(k) - math.lgamma(p - k)))


@dataclass(frozen=True)
class SubsetWeighting:
    """Kernel weights and the induced sampling law for ``p`` features.

    The sampling distribution puts mass proportional to
    ``kernel_weight(|s|, p)`` on every subset ``s``.  Grouping by size,
    the per-size mass is ``C(p, k) * kernel_weight(k, p)``, which for
    interior sizes simplifies to ``p (p-1) / (k (p-k))`` - heaviest at
    the extremes.
    """

    p: int

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")

    def unnormalized_mass(self, k: int) -> float:
        return kernel_weight(k, self.p)

    def size_weights(self) -> np.ndarray:
        """Unnormalized total mass per subset size, length ``p + 1``."""
        p = self.p
        w = np.empty(p + 1)
        w[0] = 1.0
        w[p] = 1.0
        for k in range(1, p):
            w[k] = p * (p - 1) / (k * (p - k))
        return w

    def size_probabilities(self) -> np.ndarray:
        w = self.size_weights()
        return w / w.sum()

    def subset_probability(self, subset: FeatureSubset) -> float:
        """Probability of drawing exactly ``subset``."""
        total = self.size_weights().sum()
        return self.unnormalized_mass(subset.size) / total


def ordered_subsets(p: int) -> list:
    """All ``2**p`` subsets in the canonical (size, indices) order."""
    out = []
    for k in range(p + 1):
        for combo in combinations(range(1, p + 1), k):
            out.append(FeatureSubset(combo, p))
    return out


@dataclass(frozen=True)
class EmpiricalSubsetDistribution:
    """Unique sampled subsets with their empirical probability masses.

    ``masses[i]`` is the fraction of the ``m`` draws that produced
    ``unique_subsets[i]``.  The empty and full subsets are always
    present (with mass 0 if never drawn; they enter the estimator only
    through its equality constraints).  ``gamma`` is the ratio of draws
    to observations once known to the caller.
    """

    unique_subsets: tuple
    masses: np.ndarray
    m: int
    gamma: float | None = None

    def __post_init__(self):
        subsets = tuple(self.unique_subsets)
        masses = np.asarray(self.masses, dtype=float)
        if len(subsets) != len(masses):
            raise ValueError("unique_subsets and masses length mismatch")
        order = sorted(range(len(subsets)), key=lambda i: subsets[i].sort_index)
        subsets = tuple(subsets[i] for i in order)
        masses = masses[order]
        object.__setattr__(self, "unique_subsets", subsets)
        object.__setattr__(self, "masses", masses)
        p = subsets[0].p if subsets else 0
        if len(subsets) < p + 1:
            raise ValueError(
                f"need at least p + 1 = {p + 1} unique subsets, got {len(subsets)}"
            )
        if any(s.p != p for s in subsets):
            raise ValueError("subsets disagree on p")
        if len(set(subsets)) != len(subsets):
            raise ValueError("duplicate subsets")
        if not subsets[0].is_empty or not subsets[-1].is_full:
            raise ValueError("empty and full subsets must be present")
        if np.any(masses < 0) or abs(masses.sum() - 1.0) > 1e-9:
            raise ValueError("masses must be a probability vector")
        if self.m < 1:
            raise ValueError("m must be >= 1")

    @property
    def p(self) -> int:
        return self.unique_subsets[0].p

    @property
    def n_unique(self) -> int:
        return len(self.unique_subsets)

    def encoding_matrix(self) -> np.ndarray:
        """Stack of binary encodings, shape ``(n_unique, p + 1)``."""
        return np.array([s.encode() for s in self.unique_subsets])

    def with_gamma(self, gamma: float) -> "EmpiricalSubsetDistribution":
        return replace(self, gamma=float(gamma))

    @classmethod
    def full_enumeration(cls, p: int) -> "EmpiricalSubsetDistribution":
        """All ``2**p`` subsets, massed by the exact kernel law.

        Used by oracle tests: the constrained weighted least-squares
        solution under this distribution equals the exact Shapley values.
        """
        subsets = ordered_subsets(p)
        w = np.array([kernel_weight(s.size, p) for s in subsets])
        return cls(tuple(subsets), w / w.sum(), m=1)


def _draw_batch(rng: np.random.Generator, p: int, count: int,
                size_probs: np.ndarray, counts: dict) -> None:
    """Draw ``count`` subsets and accumulate them into ``counts``."""
    sizes = rng.choice(p + 1, size=count, p=size_probs)
    per_size = np.bincount(sizes, minlength=p + 1)
    counts[()] = counts.get((), 0) + int(per_size[0])
    full = tuple(range(1, p + 1))
    counts[full] = counts.get(full, 0) + int(per_size[p])
    for k in range(1, p):
        c = int(per_size[k])
        if c == 0:
            continue
        # uniform k-subsets: smallest k of p random keys per row
        keys = rng.random((c, p))
        sel = np.argpartition(keys, k - 1, axis=1)[:, :k]
        sel = np.sort(sel, axis=1) + 1
        uniq, reps = np.unique(sel, axis=0, return_counts=True)
        for row, r in zip(uniq, reps):
            t = tuple(int(i) for i in row)
            counts[t] = counts.get(t, 0) + int(r)


def sample_subsets(p: int, m: int, seed) -> EmpiricalSubsetDistribution:
    """Draw ``m`` i.i.d. subsets from the kernel-weight law.

    Two-stage sampling: a size ``k`` with probability proportional to
    ``C(p, k) * kernel_weight(k, p)``, then a uniformly random subset of
    that size.  Duplicates aggregate into empirical masses; the empty
    and full subsets are unioned in with mass 0 if never drawn.  When
    fewer than ``p + 1`` unique subsets result, additional batches of
    ``m`` draws are taken (up to ``RESAMPLING_BATCHES``) and the final
    draw count is recorded.

    ``seed`` may be an integer or a ``numpy.random.Generator``.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    size_probs = SubsetWeighting(p).size_probabilities()

    counts: dict = {}
    drawn = 0
    for _ in range(1 + RESAMPLING_BATCHES):
        _draw_batch(rng, p, m, size_probs, counts)
        drawn += m
        n_unique = len(counts) + (() not in counts) + (tuple(range(1, p + 1)) not in counts)
        if n_unique >= p + 1:
            break
    else:
        raise SamplingBudgetError(
            f"only {len(counts)} unique subsets after {drawn} draws; "
            f"need {p + 1} (increase m)"
        )

    counts.setdefault((), 0)
    counts.setdefault(tuple(range(1, p + 1)), 0)
    subsets = tuple(FeatureSubset(t, p) for t in counts)
    masses = np.array([counts[s.indices] for s in subsets], dtype=float) / drawn
    return EmpiricalSubsetDistribution(subsets, masses, m=drawn)


def _position_lookup(p: int) -> np.ndarray:
    """Map subset bitmask -> position in the canonical ordering."""
    masks = []
    for k in range(p + 1):
        for combo in combinations(range(p), k):
            masks.append(sum(1 << i for i in combo))
    lookup = np.empty(1 << p, dtype=np.intp)
    lookup[np.array(masks, dtype=np.intp)] = np.arange(1 << p, dtype=np.intp)
    return lookup


def exact_shapley(v: Sequence[float], p: int, cap: int = EXACT_SHAPLEY_CAP) -> np.ndarray:
    """Exact Shapley attribution of a game over all ``2**p`` subsets.

    ``v`` lists the game values in the canonical subset ordering (empty
    set first, full set last).  Entry 0 of the result is the empty-set
    value; entry ``j`` is feature ``j``'s average weighted gain across
    the subset lattice.  The per-feature sums satisfy additivity (they
    total ``v[full] - v[empty]``) to machine precision, and a feature
    whose inclusion never changes ``v`` gets exactly 0.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if p > cap:
        raise CapacityError(f"p = {p} exceeds the exact-computation cap {cap}")
    v = np.asarray(v, dtype=float)
    if v.shape != (1 << p,):
        raise ValueError(f"expected {1 << p} game values for p = {p}, got {v.shape}")

    pos = _position_lookup(p)
    all_masks = np.arange(1 << p, dtype=np.intp)
    sizes = np.array([bin(mk).count("1") for mk in all_masks], dtype=np.intp)
    # weight on the gain from adding a feature to a size-k subset
    gain_w = np.array([1.0 / (p * math.comb(p - 1, k)) for k in range(p)])

    psi = np.empty(p + 1)
    psi[0] = v[0]
    for j in range(p):
        bit = 1 << j
        without = all_masks[(all_masks & bit) == 0]
        diffs = v[pos[without | bit]] - v[pos[without]]
        psi[j + 1] = diffs @ gain_w[sizes[without]]
    return psi
