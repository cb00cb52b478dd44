"""Shared exception types."""


class KpzlabError(Exception):
    """Base class for package-specific failures."""


class DimensionMismatchError(KpzlabError, ValueError):
    """Array shapes, mode counts or grid sizes do not line up."""


class ConfigError(KpzlabError, ValueError):
    """Invalid or inconsistent run configuration."""


class NonConvergenceError(KpzlabError, RuntimeError):
    """Fixed-point iteration exhausted its iteration budget.

    Carries the step index and the last relative change so callers can
    report diagnostics.
    """

    def __init__(self, message, step=None, error=None):
        super().__init__(message)
        self.step = step
        self.error = error


class PositivityError(KpzlabError, ValueError):
    """A field that must be strictly positive is not."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class FitError(KpzlabError, RuntimeError):
    """A regression window is empty or degenerate."""


class CollapseError(KpzlabError, ValueError):
    """Rescaled curves share no common abscissa range."""


class NumericError(KpzlabError, RuntimeError):
    """A quadrature or linear solve failed to reach its tolerance."""


class UnsupportedOperatorError(KpzlabError, TypeError):
    """An integrator was asked to handle an operator outside its contract."""
