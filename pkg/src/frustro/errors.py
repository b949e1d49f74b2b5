"""Exception and warning types shared across the package.

Everything user-facing derives from FrustroError so callers can catch one
base class; ValueError/RuntimeError mixins keep duck-typed callers working.
"""


class FrustroError(Exception):
    """Base class for all package errors."""


class ParameterError(FrustroError, ValueError):
    """An argument violates a precondition (wrong sign, range, shape...)."""


class DomainError(ParameterError):
    """A physical argument lies outside the validity domain of a formula."""


class PoleError(DomainError):
    """Evaluation requested on top of a pole of a closed-form expression."""


class InstabilityError(FrustroError, RuntimeError):
    """A recurrence or decomposition broke down numerically."""

    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


class ResolutionError(FrustroError, RuntimeError):
    """A discretization is too coarse to represent the requested object."""


class ConvergenceError(FrustroError, RuntimeError):
    """An iterative solver exhausted its budget; carries the residual trace."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = list(trace) if trace is not None else []


class TruncationError(FrustroError, RuntimeError):
    """Accumulated SVD truncation exceeded the configured budget."""


class AccuracyError(FrustroError, RuntimeError):
    """A quadrature failed its tolerance; carries the best estimate."""

    def __init__(self, msg, estimate=None):
        super().__init__(msg)
        self.estimate = estimate


class SweepError(FrustroError, RuntimeError):
    """Too many cells of a parameter sweep failed."""


class ConfigError(FrustroError, ValueError):
    """A run configuration file is malformed or inconsistent."""


class CheckpointError(FrustroError, RuntimeError):
    """A state checkpoint file is malformed or truncated."""


class TruncationWarning(UserWarning):
    """Lossy but tolerated truncation (packet mass outside the band, ...)."""


class NormalizationWarning(UserWarning):
    """A quantity expected to be normalized drifted measurably."""
