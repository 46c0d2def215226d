"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad input: parameters out of range, malformed histories, unknown keys."""


class NumericalError(RuntimeError):
    """A computation could not produce a trustworthy number."""
