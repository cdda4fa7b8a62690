"""Cross-fitted predictiveness estimation.

For one feature subset, fit the learner on held-in data and score the
measure on held-out data, either via K-fold cross-fitting (the value is
the unweighted mean of per-fold values, and every row receives an
influence value computed under the model fit without its fold) or a
single train/validation split (value and influence come from the
validation rows only).

One fold partition, drawn from the master seed, is shared by every
subset in a run; this keeps influence vectors row-aligned across
subsets and lets the least-squares fast path reuse per-fold Gram
matrices.  The empty subset is always fit as the training-fold outcome
mean (or prevalence), whatever the configured learner.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from . import _rng
from .errors import (
    DataError,
    DegenerateFoldError,
    DegenerateOutcomeError,
    IllPosedError,
    RunnerError,
)
from .learners import (
    LearnerSpec,
    RunnerSession,
    expand_design,
    fit_predict,
    solve_normal_equations,
)
from .measures import as_measure, measure_influence, measure_value
from .subsets import FeatureSubset


@dataclass(frozen=True)
class CrossFitScheme:
    """How to split data for predictiveness estimation."""

    kind: str = "kfold"
    folds: int = 5
    train_fraction: float = 0.7

    def __post_init__(self):
        if self.kind not in ("kfold", "split"):
            raise ValueError(f"scheme kind must be 'kfold' or 'split', got {self.kind!r}")
        if self.kind == "kfold" and self.folds < 2:
            raise ValueError("kfold needs at least 2 folds")
        if self.kind == "split" and not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")


@dataclass(frozen=True)
class PredictivenessEstimate:
    """Estimated predictiveness of one subset plus influence values.

    ``influence[i]`` is the first-order contribution of evaluation row
    ``eval_index[i]``; the influence mean is zero by construction.
    ``fold_assignment[i]`` records which fold served row ``i`` as
    held-out data.
    """

    subset: FeatureSubset
    value: float
    influence: np.ndarray
    fold_assignment: np.ndarray
    eval_index: np.ndarray

    @property
    def n_eval(self) -> int:
        return len(self.influence)

    def variance(self) -> float:
        """Asymptotic variance estimate of the value (per observation)."""
        return float(np.var(self.influence, ddof=1))


def make_folds(n: int, scheme: CrossFitScheme, rng: np.random.Generator,
               y=None, stratify: bool = False) -> np.ndarray:
    """Fold id per row; for a split scheme, -1 marks training rows.

    Stratified assignment (binary outcomes) deals each class out
    round-robin so every fold sees both classes when possible.
    """
    if scheme.kind == "kfold":
        assignment = np.empty(n, dtype=np.intp)
        if stratify and y is not None:
            for cls in (0.0, 1.0):
                idx = np.flatnonzero(np.asarray(y) == cls)
                perm = rng.permutation(idx)
                assignment[perm] = np.arange(len(perm)) % scheme.folds
        else:
            perm = rng.permutation(n)
            assignment[perm] = np.arange(n) % scheme.folds
        return assignment
    n_train = int(round(scheme.train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    assignment = np.zeros(n, dtype=np.intp)
    if stratify and y is not None:
        train_rows = []
        y = np.asarray(y)
        for cls in (0.0, 1.0):
            idx = rng.permutation(np.flatnonzero(y == cls))
            take = int(round(scheme.train_fraction * len(idx)))
            train_rows.append(idx[:take])
        train = np.concatenate(train_rows) if train_rows else np.empty(0, dtype=np.intp)
    else:
        train = rng.permutation(n)[:n_train]
    assignment[train] = -1
    return assignment


class CrossFitEvaluator:
    """Per-subset predictiveness over a fixed dataset and fold partition.

    Built once per estimation run and queried for every unique subset.
    ``column_map`` translates subset indices to raw feature columns
    (identity by default; group estimation maps a meta-feature to the
    union of its group's columns).  For least-squares learners the
    evaluator caches per-fold Gram blocks of the expanded design so each
    subset solve touches only a small submatrix.
    """

    def __init__(self, X, y, task, learner: LearnerSpec, measure, folds: np.ndarray,
                 eval_mask=None, seed: int = 0, column_map=None):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.task = task
        self.learner = learner
        self.measure = as_measure(measure)
        self.folds = np.asarray(folds, dtype=np.intp)
        self.seed = seed
        self.column_map = column_map or (lambda subset: subset.columns())
        n = len(self.y)
        if self.X.shape[0] != n or self.folds.shape[0] != n:
            raise ValueError("X, y, and folds must agree on row count")
        self.eval_mask = np.ones(n, dtype=bool) if eval_mask is None else np.asarray(eval_mask, dtype=bool)
        self.fold_ids = sorted(int(k) for k in np.unique(self.folds) if k >= 0)
        self._fold_rows = {k: np.flatnonzero(self.folds == k) for k in self.fold_ids}
        self._fold_eval_rows = {
            k: np.flatnonzero((self.folds == k) & self.eval_mask) for k in self.fold_ids
        }
        self.eval_index = np.flatnonzero((self.folds >= 0) & self.eval_mask)
        self._fold_positions = {
            k: np.searchsorted(self.eval_index, rows)
            for k, rows in self._fold_eval_rows.items()
        }
        self._models_fitted = 0
        self._lock = threading.Lock()
        self._session_local = threading.local()
        self._sessions = []

        self._fast = learner.kind in ("linear_ols", "mean_only")
        if self._fast:
            self._prepare_linear_cache()

    # -- linear fast path -------------------------------------------------

    def _prepare_linear_cache(self):
        basis = self.learner.hyperparameters.get("basis") if self.learner.kind == "linear_ols" else None
        p_raw = self.X.shape[1]
        blocks = []
        self._feature_cols = {}
        start = 1
        for j in range(p_raw):
            block = expand_design(self.X[:, j : j + 1], basis)
            self._feature_cols[j] = list(range(start, start + block.shape[1]))
            start += block.shape[1]
            blocks.append(block)
        self._design = np.hstack([np.ones((len(self.y), 1))] + blocks)
        self._gram_full = self._design.T @ self._design
        self._xty_full = self._design.T @ self.y
        self._gram_fold = {}
        self._xty_fold = {}
        self._ysum_fold = {}
        for k in self.fold_ids:
            rows = self._fold_rows[k]
            Bk = self._design[rows]
            self._gram_fold[k] = Bk.T @ Bk
            self._xty_fold[k] = Bk.T @ self.y[rows]
            self._ysum_fold[k] = float(self.y[rows].sum())
        # rows outside every evaluation fold (the split scheme's train part)
        train_only = np.flatnonzero(self.folds < 0)
        Bt = self._design[train_only]
        self._gram_train_only = Bt.T @ Bt
        self._xty_train_only = Bt.T @ self.y[train_only]
        self._ysum_train_only = float(self.y[train_only].sum())
        self._n_train_only = len(train_only)
        self._ysum_total = float(self.y.sum())

    def _linear_predictions(self, subset: FeatureSubset, fold: int) -> np.ndarray:
        rows = self._fold_eval_rows[fold]
        n_fold = len(self._fold_rows[fold])
        n_train = len(self.y) - n_fold if len(self.fold_ids) > 1 else self._n_train_only
        if subset.is_empty or self.learner.kind == "mean_only":
            if len(self.fold_ids) > 1:
                mean = (self._ysum_total - self._ysum_fold[fold]) / n_train
            else:
                mean = self._ysum_train_only / n_train
            return np.full(len(rows), mean)
        cols = [0]
        for j in self.column_map(subset):
            cols.extend(self._feature_cols[int(j)])
        ix = np.ix_(cols, cols)
        if len(self.fold_ids) > 1:
            gram = self._gram_full[ix] - self._gram_fold[fold][ix]
            b = self._xty_full[cols] - self._xty_fold[fold][cols]
        else:
            gram = self._gram_train_only[ix]
            b = self._xty_train_only[cols]
        beta = solve_normal_equations(gram, b, self.learner.hyperparameters.get("ridge"))
        return self._design[np.ix_(rows, cols)] @ beta

    # -- generic path ------------------------------------------------------

    def _get_session(self) -> RunnerSession:
        session = getattr(self._session_local, "session", None)
        if session is None:
            session = RunnerSession(self.learner)
            self._session_local.session = session
            with self._lock:
                self._sessions.append(session)
        return session

    def _generic_predictions(self, subset: FeatureSubset, fold: int) -> np.ndarray:
        rows = self._fold_eval_rows[fold]
        if len(self.fold_ids) > 1:
            train = np.flatnonzero(self.folds != fold)
        else:
            train = np.flatnonzero(self.folds < 0)
        raw_cols = np.asarray(self.column_map(subset), dtype=np.intp)
        p_raw = self.X.shape[1]
        effective = (FeatureSubset.of(raw_cols + 1, p_raw) if len(raw_cols)
                     else FeatureSubset.empty(p_raw))
        seed = _rng.derive_seed(self.seed, _rng.LEARNER, subset.size, *subset.indices)
        if self.learner.kind == "external" and not effective.is_empty:
            session = self._get_session()
            session.fit(effective, self.X[train], self.y[train], task=self.task, seed=seed)
            return session.predict(self.X[rows])
        spec = self.learner if not effective.is_empty else LearnerSpec("mean_only")
        return fit_predict(spec, effective, (self.X[train], self.y[train]), self.X[rows],
                           task=self.task, seed=seed)

    def close(self) -> None:
        """Shut down any runner sessions opened by this evaluator."""
        with self._lock:
            sessions, self._sessions = self._sessions, []
        for session in sessions:
            session.close()

    @property
    def models_fitted(self) -> int:
        return self._models_fitted

    def evaluate(self, subset: FeatureSubset) -> PredictivenessEstimate:
        values = []
        influence = np.empty(len(self.eval_index))
        fold_of = np.empty(len(self.eval_index), dtype=np.intp)
        for fold in self.fold_ids:
            rows = self._fold_eval_rows[fold]
            if len(rows) < 2:
                raise DegenerateFoldError(fold, "fewer than 2 evaluation rows")
            try:
                preds = (self._linear_predictions(subset, fold) if self._fast
                         else self._generic_predictions(subset, fold))
            except (IllPosedError, RunnerError) as exc:
                raise type(exc)(f"learner failed on subset {subset.indices}: {exc}") from exc
            y_fold = self.y[rows]
            try:
                values.append(measure_value(self.measure, preds, y_fold))
                infl = measure_influence(self.measure, preds, y_fold)
            except DegenerateOutcomeError as exc:
                raise DegenerateFoldError(fold, str(exc)) from exc
            at = self._fold_positions[fold]
            influence[at] = infl
            fold_of[at] = fold
        with self._lock:
            self._models_fitted += 1
        return PredictivenessEstimate(
            subset=subset,
            value=float(np.mean(values)),
            influence=influence,
            fold_assignment=fold_of,
            eval_index=self.eval_index,
        )


def cross_fit_predictiveness(learner: LearnerSpec, data, subset: FeatureSubset,
                             scheme: CrossFitScheme, measure, seed: int) -> PredictivenessEstimate:
    """Cross-fitted predictiveness of one subset.

    ``data`` is a :class:`spvim.data.Dataset` or an ``(X, y)`` pair (the
    latter assumed continuous unless the measure implies otherwise).
    The fold partition derives from ``seed``; repeated calls are
    bit-identical.
    """
    if hasattr(data, "X"):
        X, y, task = data.X, data.y, data.task
    else:
        X, y = data
        task = as_measure(measure).outcome_task
    n = len(np.asarray(y))
    if scheme.kind == "kfold" and n < 4 * scheme.folds:
        raise DataError(f"need at least {4 * scheme.folds} rows for {scheme.folds}-fold cross-fitting")
    rng = _rng.derive_rng(seed, _rng.FOLDS)
    folds = make_folds(n, scheme, rng, y=y, stratify=(task == "binary"))
    evaluator = CrossFitEvaluator(X, y, task, learner, measure, folds, seed=seed)
    try:
        return evaluator.evaluate(subset)
    finally:
        evaluator.close()
