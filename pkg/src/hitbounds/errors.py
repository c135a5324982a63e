"""Exception types shared across the package."""

from __future__ import annotations


class HitBoundsError(Exception):
    """Base class for all package-specific errors."""


class ModelFormatError(HitBoundsError):
    """A model document could not be parsed into a Model."""


class ValidationError(HitBoundsError):
    """A model failed structural or assumption validation."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = violations or []


class BoundViolationError(HitBoundsError):
    """A rate selection falls outside the interval bounds at some (x, y)."""


class StepSizeError(HitBoundsError):
    """A discretization step violates the step-size precondition."""


class InfeasibilityError(HitBoundsError):
    """A linear system that should be solvable (under the model assumptions)
    turned out singular, typically signalling an unreachable target."""


class NonConvergenceError(HitBoundsError):
    """An iterative solver hit its iteration cap before meeting tolerance."""

    def __init__(self, message: str, residual: float | None = None,
                 iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class AssumptionViolationError(HitBoundsError):
    """A diagnostic detected that the absorbing/reachability assumptions
    cannot hold for the supplied model (e.g. contraction coefficient >= 1)."""


class EstimationError(HitBoundsError):
    """A Monte Carlo estimate could not be formed (e.g. every path censored)."""
