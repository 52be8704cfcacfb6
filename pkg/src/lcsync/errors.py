"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems -> 2, coverage
problems -> 3, numerical failures -> 4, validation disagreement -> 5.
"""


class LcsyncError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(LcsyncError):
    """Invalid or inconsistent run configuration."""


class DomainError(LcsyncError):
    """Input outside an operation's documented domain (non-finite, off-cycle, ...)."""


class CoverageError(LcsyncError):
    """A query point or sweep is not covered by the computed field."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class NumericalError(LcsyncError):
    """Base class for failures of the numerical machinery."""


class StepFailureError(NumericalError):
    """Adaptive step size underflowed; carries the last valid (t, state)."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class EventOverflowError(NumericalError):
    """More events fired than max_events allows."""


class BracketingError(NumericalError):
    """A root/bisection bracket does not straddle the sought change."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class ConvergenceError(NumericalError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message, last_bracket=None):
        super().__init__(message)
        self.last_bracket = last_bracket


class ChatteringError(NumericalError):
    """Two consecutive bang switches closer than the chattering guard allows."""


class SingularArcError(NumericalError):
    """p2 and dp2/dt simultaneously vanished over a finite window (forbidden)."""


class InconsistentFinalPointError(DomainError):
    """Final point has x2 ~ 0 but is not near an extreme point of the cycle."""


class DegenerateNormalError(NumericalError):
    """Outward normal undefined (both components below threshold)."""


class ValidationError(LcsyncError):
    """Synthesis and oracle disagree beyond tolerance."""
