"""Exception types shared across the package."""

from __future__ import annotations


class GauduchonError(Exception):
    """Base class for all package-specific errors."""


class ConeViolation(GauduchonError):
    """A tensor left the positivity cone required by the equation.

    Carries the flat index of the worst grid point and the offending
    (smallest) eigenvalue so a solver can backtrack instead of crashing.
    """

    def __init__(self, message, point=None, eigenvalue=None):
        super().__init__(message)
        self.point = point
        self.eigenvalue = eigenvalue

    def __str__(self):
        base = super().__str__()
        if self.point is not None:
            base += f" (worst point {self.point}, eigenvalue {self.eigenvalue:.3e})"
        return base


class NonPositiveFactor(GauduchonError):
    """The computed conformal kernel element changes sign.

    Theory guarantees a positive generator, so this signals numerical
    failure of the eigensolve rather than a genuine obstruction.
    """


class NoConvergence(GauduchonError):
    """Newton iteration exhausted its budget without meeting tolerance."""

    def __init__(self, message, last_residual=None):
        super().__init__(message)
        self.last_residual = last_residual


class StepFailure(GauduchonError):
    """Continuation step size fell below the minimum.

    The last successfully solved state is attached for post-mortem dumps.
    """

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class ConfigError(GauduchonError):
    """Scenario configuration is unparseable or violates its constraints."""
