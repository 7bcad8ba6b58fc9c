"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: DataError -> 2, PipelineError (and the
numerical failures it wraps) -> 3, ModelFormatError -> 4.
"""


class GpselError(Exception):
    """Base class for all package errors."""


class DataError(GpselError):
    """Invalid input data: bad CSV, dimension mismatch, degenerate columns."""


class ParameterDomainError(GpselError, ValueError):
    """Correlation parameters outside their admissible domain."""


class IllConditionedError(GpselError):
    """Covariance factorization failed even after the jitter ladder."""

    def __init__(self, message: str, jitter_attempted: float):
        super().__init__(message)
        self.jitter_attempted = jitter_attempted


class RankDeficiencyError(GpselError):
    """Regression matrix is rank deficient under the correlation inner product."""

    def __init__(self, message: str, columns: tuple[int, ...]):
        super().__init__(message)
        self.columns = columns


class SampleTooSmallError(GpselError):
    """Information-criterion denominator is non-positive for this model size."""


class FoldFitError(GpselError):
    """A cross-validation fold failed to fit."""

    def __init__(self, fold: int, cause: Exception):
        super().__init__(f"fold {fold} failed: {cause}")
        self.fold = fold
        self.cause = cause


class PipelineError(GpselError):
    """Selection pipeline failure, annotated with the step where it occurred."""

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step


class ModelFormatError(GpselError):
    """Model file is unreadable or has an unsupported version."""
