"""Exception hierarchy.

Everything raised on purpose derives from :class:`NpmlError`, so callers can
catch one type at the boundary (the CLI does exactly that). Subclasses carry
payloads where a caller can act on them: the offending subject id, the
parameter vector that broke the integrator, or the best iterate of a solver
that ran out of iterations.
"""

from __future__ import annotations


class NpmlError(Exception):
    """Base class for all errors raised by this package."""


class BoundsViolationError(NpmlError):
    """A parameter vector lies outside its parameter-space box."""


class ModelDomainError(NpmlError):
    """Structural-model parameters outside the model's domain (e.g. Ke <= 0)."""


class IntegrationFailureError(NpmlError):
    """The ODE integrator failed (step-size underflow or solver error)."""

    def __init__(self, message: str, theta=None):
        super().__init__(message)
        self.theta = theta


class NonpositiveSigmaError(NpmlError):
    """Error polynomial produced sigma <= 0 where a positive value is required."""


class NonpositiveOmegaError(NpmlError):
    """Combined observation noise omega <= 0."""


class InfeasibleSubjectError(NpmlError):
    """A subject has zero likelihood at every support point of the grid."""

    def __init__(self, subject_id: str, message: str | None = None):
        super().__init__(message or f"subject {subject_id!r} has zero likelihood on the entire grid")
        self.subject_id = subject_id


class ConvergenceFailureError(NpmlError):
    """An iterative solver hit its iteration cap before meeting tolerance."""

    def __init__(self, message: str, best=None, cycle: int | None = None):
        super().__init__(message)
        self.best = best
        self.cycle = cycle


class DegeneratePsiError(NpmlError):
    """The likelihood matrix produced a numerically singular Newton system."""


class ParseError(NpmlError):
    """A data or config file failed to parse; message names file and line."""


class ConfigError(NpmlError):
    """A config document violates the strict schema."""
