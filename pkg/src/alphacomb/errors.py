"""Exception hierarchy shared by every module."""

from __future__ import annotations


class AlphaCombError(Exception):
    """Base class for all errors raised by alphacomb."""


class ParseError(AlphaCombError, ValueError):
    """A cell in an input file could not be read as a finite float."""

    def __init__(self, message: str, row: int | None = None, column: str | int | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class ValidationError(AlphaCombError, ValueError):
    """Input violates a data-model invariant."""


class DegenerateError(ValidationError):
    """A quantity needed for normalization vanished (zero variance, zero weights...)."""


class DenseCapError(AlphaCombError):
    """Refusal to run an O(N^2) oracle path above the configured cap."""


class SingularDesignError(AlphaCombError, ArithmeticError):
    """Regression Gram matrix is numerically singular."""

    def __init__(self, message: str, column: int | None = None, condition: float | None = None):
        super().__init__(message)
        self.column = column
        self.condition = condition


class NotPositiveDefiniteError(AlphaCombError, ArithmeticError):
    """A matrix that must be positive (semi-)definite is not."""
