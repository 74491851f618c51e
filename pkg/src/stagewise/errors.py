"""Exception types raised across the pipeline."""


class StagewiseError(ValueError):
    """Base class for all errors raised by this package."""


class SchemaError(StagewiseError):
    """Input file does not provide the expected columns."""


class IntegrityError(StagewiseError):
    """Input data violates a structural invariant (ordering, length, NaN)."""


class UsageError(StagewiseError):
    """A function was called with arguments outside its contract."""


class DimensionError(StagewiseError):
    """Array shapes are incompatible, or a series is too short."""


class DegenerateInputError(StagewiseError):
    """Input carries no information (constant series, zero variance)."""


class SingularityError(StagewiseError):
    """A covariance matrix is not invertible."""


class DomainError(StagewiseError):
    """A value lies outside the domain of a function (e.g. non-PD covariance)."""


class PipelineError(StagewiseError):
    """The segmentation pipeline could not produce a model for a window."""
