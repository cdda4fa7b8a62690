"""Scikit-learn style front end for importance estimation.

``SpvimEstimator`` follows the usual estimator conventions (constructor
stores parameters verbatim, ``fit`` validates and computes, fitted
attributes carry a trailing underscore, ``get_params``/``set_params``
come from ``BaseEstimator``), so it drops into pipelines and model
selection tooling.  ``transform`` optionally selects the columns whose
importance clears a threshold, making the estimator usable as a feature
selector.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset
from .learners import LearnerSpec
from .crossfit import CrossFitScheme
from .measures import as_measure
from .pipeline import EstimationConfig, estimate_spvim


class SpvimEstimator(BaseEstimator):
    """Shapley population variable importance with Wald inference.

    Parameters
    ----------
    measure : {"r_squared", "accuracy", "auc"}
        Predictiveness measure; fixes the outcome task (continuous for
        r_squared, binary otherwise).
    learner : str or LearnerSpec
        Per-subset learner: "mean_only", "linear_ols", "logistic_irls",
        or a full :class:`LearnerSpec` (including external runners).
    learner_params : dict, optional
        Hyperparameters when ``learner`` is given by name.
    gamma : float
        Subset draws per observation (>= 1).
    scheme : {"kfold", "split"}
    folds : int
        Fold count for the kfold scheme.
    train_fraction : float
        Training share for the split scheme.
    alpha : float
        Level for confidence intervals and tests.
    delta : float
        Null-hypothesis margin of the split-sample test.
    run_tests : bool
        Run the per-feature split-sample tests during ``fit``.
    bonferroni : bool
        Divide alpha by the feature count in the tests.
    nonnegative : bool
        Constrain importance estimates to be nonnegative.
    groups : sequence of sequences of int, optional
        Disjoint covering groups (1-based feature indices); importance
        is then reported per group.
    subpopulation : (column, comparator, threshold), optional
        Restrict predictiveness evaluation to matching rows.
    selection_threshold : float, optional
        When set, ``transform`` keeps features with importance at or
        above the threshold.
    workers : int
        Worker threads for per-subset fitting.
    random_state : int
        Master seed; results are bit-reproducible for a fixed value.

    Attributes
    ----------
    psi_ : ndarray of shape (p + 1,)
        Null predictiveness followed by per-feature importance.
    feature_importances_ : ndarray of shape (p,)
        ``psi_[1:]``, for ecosystem interoperability.
    se_, ci_lower_, ci_upper_ : ndarray of shape (p + 1,)
    tests_ : tuple of TestResult or None
    result_ : SpvimResult
        The full result object, including diagnostics.
    """

    def __init__(self, measure="r_squared", learner="linear_ols", learner_params=None,
                 gamma=2.0, scheme="kfold", folds=5, train_fraction=0.7, alpha=0.05,
                 delta=0.0, run_tests=False, bonferroni=False, nonnegative=False,
                 groups=None, subpopulation=None, selection_threshold=None,
                 workers=1, random_state=0):
        self.measure = measure
        self.learner = learner
        self.learner_params = learner_params
        self.gamma = gamma
        self.scheme = scheme
        self.folds = folds
        self.train_fraction = train_fraction
        self.alpha = alpha
        self.delta = delta
        self.run_tests = run_tests
        self.bonferroni = bonferroni
        self.nonnegative = nonnegative
        self.groups = groups
        self.subpopulation = subpopulation
        self.selection_threshold = selection_threshold
        self.workers = workers
        self.random_state = random_state

    def _config(self) -> EstimationConfig:
        learner = self.learner
        if not isinstance(learner, LearnerSpec):
            learner = LearnerSpec(str(learner), dict(self.learner_params or {}))
        return EstimationConfig(
            gamma=self.gamma,
            scheme=CrossFitScheme(kind=self.scheme, folds=self.folds,
                                  train_fraction=self.train_fraction),
            measure=self.measure,
            learner=learner,
            workers=self.workers,
            seed=self.random_state,
            alpha=self.alpha,
            delta=self.delta,
            groups=self.groups,
            subpopulation=self.subpopulation,
            run_tests=self.run_tests,
            bonferroni=self.bonferroni,
            nonnegative=self.nonnegative,
        )

    def fit(self, X, y, feature_names=None):
        """Estimate importance values on ``(X, y)``."""
        X, y = check_X_y(X, y, dtype=float, ensure_min_samples=2)
        task = as_measure(self.measure).outcome_task
        names = tuple(feature_names) if feature_names is not None else tuple(
            f"x{j}" for j in range(1, X.shape[1] + 1)
        )
        dataset = Dataset(X=X, y=y, feature_names=names, outcome_name="y", task=task)
        result = estimate_spvim(dataset, self._config())
        self.n_features_in_ = X.shape[1]
        self.feature_names_in_ = np.asarray(names, dtype=object)
        self.result_ = result
        self.psi_ = result.psi
        self.se_ = result.standard_errors
        self.ci_lower_ = result.ci_lower
        self.ci_upper_ = result.ci_upper
        self.tests_ = result.tests
        return self

    @property
    def feature_importances_(self) -> np.ndarray:
        check_is_fitted(self, "psi_")
        return self.psi_[1:]

    def get_support(self) -> np.ndarray:
        """Boolean mask of selected features (plain estimation only)."""
        check_is_fitted(self, "psi_")
        if self.groups is not None:
            raise ValueError("feature selection is undefined for group importance")
        if self.selection_threshold is None:
            raise ValueError("set selection_threshold to use feature selection")
        return self.psi_[1:] >= self.selection_threshold

    def transform(self, X) -> np.ndarray:
        """Keep the columns whose importance clears the threshold."""
        X = check_array(X, dtype=float)
        support = self.get_support()
        if X.shape[1] != len(support):
            raise ValueError(f"X has {X.shape[1]} features, expected {len(support)}")
        return X[:, support]

    def fit_transform(self, X, y, **fit_params) -> np.ndarray:
        return self.fit(X, y, **fit_params).transform(X)
