"""Shared exception types."""


class ParameterError(ValueError):
    """An argument is outside the documented domain of an operation."""


class RegimeError(ValueError):
    """The spectral parameter falls outside the regime this formula covers."""


class DegenerateGeometryError(ValueError):
    """The width function collapses below the resolvable floor."""


class ConvergenceError(RuntimeError):
    """Iterative eigensolve failed; carries the best residual reached."""

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class ResolutionError(ValueError):
    """The grid is too coarse for the requested quantity."""


class EmptyRegionError(ValueError):
    """A region restriction covers no grid cells."""


class ConfigError(ValueError):
    """Malformed or out-of-range run configuration."""


class CacheVersionError(RuntimeError):
    """Eigenpair cache was written by an incompatible format version."""
