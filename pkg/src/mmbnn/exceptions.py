"""Exception types raised across the package."""

import numpy as np


class DimensionError(ValueError):
    """Array shapes do not conform."""


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky factorization hit a non-positive pivot.

    ``pivot`` is the zero-based index of the failing leading minor.
    """

    def __init__(self, pivot, message=None):
        self.pivot = int(pivot)
        super().__init__(message or f"matrix is not positive definite (pivot {self.pivot})")


class ContractError(ValueError):
    """A documented precondition of an operation was violated."""


class SupportError(ValueError):
    """A value lies outside the support of a distribution, or parameters are invalid."""


class NumericalFailureError(ArithmeticError):
    """An intermediate matrix lost positive definiteness."""

    def __init__(self, message, condition=None):
        self.condition = condition
        if condition is not None:
            message = f"{message} (condition number ~ {condition:.3e})"
        super().__init__(message)


class DivergenceError(ArithmeticError):
    """Training produced a non-finite loss. Carries the loss trace up to the failure."""

    def __init__(self, message, trace=None):
        self.trace = list(trace) if trace is not None else []
        super().__init__(message)


class ConfigError(ValueError):
    """Invalid experiment configuration."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(ValueError):
    """Input file is missing required columns or fields."""


class IngestionError(ValueError):
    """Input data could not be ingested (gaps, bad timestamps)."""


class DomainError(ValueError):
    """Function evaluated outside its mathematical domain."""
