"""Exception hierarchy shared by every creafusion module.

``ValidationError`` marks problems with caller-supplied inputs (bad shapes,
unknown configuration keys, missing files) and maps to CLI exit status 2.
Everything else deriving from ``CreafusionError`` is a runtime failure and maps
to exit status 1.
"""

from __future__ import annotations


class CreafusionError(RuntimeError):
    """Base class for runtime failures raised by creafusion."""


class ValidationError(CreafusionError, ValueError):
    """Raised when inputs violate an operation's preconditions."""


class ContractViolationError(ValidationError):
    """Raised when a numeric routine receives an argument it cannot accept."""


class DimensionMismatchError(ValidationError):
    """Raised when two operands disagree on shape."""


class InvalidCutoffError(ValidationError):
    """Raised when a filter cutoff is not strictly inside (0, fs/2)."""


class DegenerateClassError(ValidationError):
    """Raised when a class covariance has zero trace."""


class MissingClassError(ValidationError):
    """Raised when a training set lacks one or more class labels."""


class EmptyCatalogError(ValidationError):
    """Raised when an artwork catalog or generated set is empty."""


class FormatError(ValidationError):
    """Raised when an artifact file does not match its documented layout."""


class NonFiniteError(CreafusionError):
    """Raised when a computation produces NaN or infinity."""


class ConvergenceError(CreafusionError):
    """Raised when an iterative routine exhausts its iteration budget."""


class StageError(CreafusionError):
    """Raised when a pipeline stage fails; records the stage name."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


__all__ = [
    "ContractViolationError",
    "ConvergenceError",
    "CreafusionError",
    "DegenerateClassError",
    "DimensionMismatchError",
    "EmptyCatalogError",
    "FormatError",
    "InvalidCutoffError",
    "MissingClassError",
    "NonFiniteError",
    "StageError",
    "ValidationError",
]
