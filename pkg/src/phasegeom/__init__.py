"""Coherent-state phase-space geometry, history probabilities and uncertainty chains."""
from . import numerics
from .errors import NumericalError, ValidationError

__version__ = "0.1.0"

__all__ = ["NumericalError", "ValidationError", "numerics", "__version__"]
