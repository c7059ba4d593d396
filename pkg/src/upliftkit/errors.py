"""Exception types shared across the toolkit."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition or invariant."""


class SchemaError(ValidationError):
    """Raised when a CSV file is missing required columns."""


class MetricUndefinedError(ValidationError):
    """Raised when a curve metric has no defined value for the given data."""
