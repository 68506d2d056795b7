"""Exception hierarchy shared across the pipeline.

Grouped by exit-code family: usage/config errors map to exit 2, data errors
to exit 3, numeric/convergence errors to exit 4.
"""


class DissentError(Exception):
    """Base class for all pipeline errors."""


# -- usage / configuration (exit 2) -----------------------------------------

class ConfigError(DissentError):
    """Invalid configuration value or missing required config field."""


# -- data (exit 3) -----------------------------------------------------------

class DataError(DissentError):
    """Base class for problems with input data."""


class FormatError(DataError):
    """File does not start with the expected magic header."""


class CorruptionError(DataError):
    """File structure is inconsistent (truncation, count mismatch, bad shape)."""


class DataValueError(DataError):
    """Values violate a documented invariant (non-finite, out of range, ...)."""


class ValidationError(DataError):
    """Record-level invariant violated (chair not in attendees, duplicates, ...)."""


class EmptyDocumentError(DataError):
    """A transcript with zero real sentences was fed to a model."""


class AggregationError(DataError):
    """Aggregation requested over an empty group."""


class InsufficientDataError(DataError):
    """Too few observations for the requested statistic."""


class UndefinedEntropyError(DataError):
    """Entropy of an empty count vector."""


# -- numeric / convergence (exit 4) ------------------------------------------

class NumericError(DissentError):
    """Base class for numeric failures."""


class DimensionError(NumericError):
    """Operand shapes are incompatible."""


class EmptyAttentionError(NumericError):
    """Every key position is masked; attention is undefined."""


class ClassCoverageError(NumericError):
    """Dataset does not contain both classes."""


class FoldError(NumericError):
    """Cross-validation fold specification is infeasible."""


class TrainingDivergedError(NumericError):
    """Loss became non-finite during training.

    Carries the last finite metrics trace in ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class ConvergenceError(NumericError):
    """An iterative estimator failed to converge; diagnostics in ``detail``."""

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail


class RankError(NumericError):
    """Design matrix is rank deficient; offending columns are named."""


class UnidentifiedEffectError(NumericError):
    """Residualized treatment has no variance; effect not identified."""
