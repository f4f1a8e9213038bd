"""Exception hierarchy for solver, model, and configuration failures."""


class MeanRevError(Exception):
    """Base class for all package-specific errors."""


class ModelDomainError(MeanRevError, ValueError):
    """A state or parameter lies outside the model's admissible domain."""


class UnsupportedLawError(MeanRevError):
    """Closed-form transition law requested for a family that has none."""


class BracketFailureError(MeanRevError, RuntimeError):
    """Root bracketing failed after the configured number of expansions."""


class ConvergenceError(MeanRevError, RuntimeError):
    """An iterative solve exceeded its iteration budget or tolerance."""


class BoundaryCrossingError(MeanRevError, RuntimeError):
    """Coupled boundary iterates crossed each other."""


class QuadratureError(MeanRevError, RuntimeError):
    """Numerical quadrature failed to converge to the requested tolerance."""


class ConfigError(MeanRevError, ValueError):
    """A run configuration file is invalid."""
