"""Deterministic random-stream derivation.

All stochastic draws in the package derive from a single master seed via
``numpy.random.SeedSequence`` spawn keys, so results are bit-reproducible
for a fixed seed regardless of worker count or completion order.

Stream tags (first spawn-key entry):

====  =======================================================
tag   purpose
====  =======================================================
1     subset sampling
2     cross-fitting fold / train-validation split assignment
3     sample-splitting for hypothesis tests (then 1 or 2 for
      the two portions)
4     per-subset learner seeds (key: ``(4, |s|, *indices)``)
5     experiment replicates (key: ``(5, replicate)``)
6     data simulation
====  =======================================================
"""

import numpy as np

SAMPLING = 1
FOLDS = 2
TEST_SPLIT = 3
LEARNER = 4
EXPERIMENT = 5
SIMULATE = 6


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream identified by ``key`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def derive_seed(seed: int, *key: int) -> int:
    """A derived integer seed usable as a child master seed."""
    return int(np.random.SeedSequence(seed, spawn_key=tuple(key)).generate_state(1)[0])
