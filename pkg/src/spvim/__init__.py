"""Shapley population variable importance with statistical inference.

Estimate how much each feature (or feature group) contributes to the
best achievable predictiveness of a supervised-learning task, by
solving a constrained weighted least-squares problem over a random
sample of feature subsets.  Confidence intervals and hypothesis tests
come from influence-function covariance estimates.

Quick start::

    from spvim import SpvimEstimator
    est = SpvimEstimator(measure="r_squared", random_state=1).fit(X, y)
    est.psi_            # null predictiveness + per-feature importance
    est.ci_lower_, est.ci_upper_

or through the functional interface::

    from spvim import EstimationConfig, estimate_spvim
    result = estimate_spvim(dataset, EstimationConfig(seed=1))
"""

__version__ = "0.1.0"

from .crossfit import CrossFitScheme, PredictivenessEstimate, cross_fit_predictiveness
from .data import Dataset, load_dataset, save_dataset
from .errors import (
    CapacityError,
    ConfigError,
    DataError,
    DegenerateFoldError,
    DegenerateOutcomeError,
    DegenerateVarianceError,
    IllPosedError,
    PartitionError,
    RunnerError,
    SamplingBudgetError,
    SolverError,
    SpvimError,
    SubpopulationSizeError,
    UnderIdentifiedError,
)
from .estimator import SpvimEstimator
from .inference import (
    CovarianceEstimate,
    TestResult,
    estimate_covariance,
    null_fit_variance,
    spvim_test,
    wald_intervals,
)
from .learners import LearnerSpec, RunnerSession, fit_predict, runner_session
from .measures import PredictivenessMeasure, measure_influence, measure_value
from .pipeline import (
    EstimationConfig,
    SpvimResult,
    estimate_spvim,
    group_spvim,
    subpopulation_spvim,
)
from .simulate import linear_true_importance, simulate
from .solver import ConstraintSystem, CwlsSolution, nullspace_qr, solution_sensitivity, solve_cwls
from .subsets import (
    EmpiricalSubsetDistribution,
    FeatureSubset,
    SubsetWeighting,
    exact_shapley,
    kernel_weight,
    ordered_subsets,
    sample_subsets,
    subset_encode,
)

__all__ = [name for name in dir() if not name.startswith("_")]
