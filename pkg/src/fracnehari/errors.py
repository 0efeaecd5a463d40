"""Exception hierarchy shared across the package."""


class FracNehariError(Exception):
    """Base class for all package errors."""


class DomainError(FracNehariError, ValueError):
    """A parameter lies outside the domain where an operation is defined."""


class DimensionError(FracNehariError, ValueError):
    """Operands live on different grids or have incompatible shapes."""


class ConfigError(FracNehariError, ValueError):
    """A problem configuration violates one of its standing assumptions."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class HypothesisScanError(FracNehariError):
    """A sampling scan could not produce the constant it was asked for."""


class ProjectionError(FracNehariError):
    """No sign bracket for the fiber derivative was found."""


class StagnationError(FracNehariError):
    """The line search failed to decrease the energy."""


class GroundStateError(FracNehariError):
    """Every restart of the ground-state search failed."""

    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)
