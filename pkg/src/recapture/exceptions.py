"""Exception types shared across the package."""


class RecaptureError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(RecaptureError, ValueError):
    """Invalid configuration: bad subset, learner settings, grids, or shapes."""


class ProbabilityDomainError(RecaptureError, ValueError):
    """A probability input violates positivity, bound, or normalization rules."""


class DataValidationError(RecaptureError, ValueError):
    """Observed data violates the input contract (bad rows, columns, or ids)."""
