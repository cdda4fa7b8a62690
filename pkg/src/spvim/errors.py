"""Exception hierarchy.

Each branch maps to a CLI exit code (see ``spvim.cli``): configuration
problems exit 2, data problems 3, subset-sampling failures 4, solver
failures 5, and external-runner failures 6.
"""


class SpvimError(Exception):
    """Base class for all package errors."""


class ConfigError(SpvimError):
    """Invalid configuration (bad field value, inconsistent options)."""


class PartitionError(ConfigError):
    """Feature groups do not form a disjoint cover of the features."""


class DataError(SpvimError):
    """Invalid or unusable input data."""


class DegenerateOutcomeError(DataError):
    """Outcome vector cannot support the requested measure.

    Raised for AUC with a single outcome class or R-squared with zero
    outcome variance.
    """


class DegenerateFoldError(DataError):
    """A cross-fitting fold cannot support the requested measure."""

    def __init__(self, fold: int, message: str):
        super().__init__(f"fold {fold}: {message}")
        self.fold = fold


class SubpopulationSizeError(DataError):
    """The subpopulation predicate selects too few evaluation rows."""


class DegenerateVarianceError(DataError):
    """Zero variance in a test denominator.

    Consider the AUC measure (whose null predictiveness is non-degenerate)
    or a larger second split portion.
    """


class SamplingBudgetError(SpvimError):
    """Could not reach the required number of unique subsets."""


class SolverError(SpvimError):
    """Constrained least-squares solve failed."""


class UnderIdentifiedError(SolverError):
    """Fewer unique subsets than unknowns; sample more subsets."""


class IllPosedError(SolverError):
    """System too ill-conditioned to solve reliably; sample more subsets."""


class CapacityError(SpvimError):
    """Requested exact computation exceeds the configured size cap."""


class RunnerError(SpvimError):
    """External model-runner protocol failure."""

    def __init__(self, message: str, frame=None):
        if frame is not None:
            message = f"{message} (offending frame: {frame!r})"
        super().__init__(message)
        self.frame = frame
