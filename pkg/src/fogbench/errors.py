"""Exception types raised across fogbench."""


class FogbenchError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FogbenchError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ConfigError(FogbenchError, ValueError):
    """A configuration value violates its documented constraints."""


class ShapeError(FogbenchError, ValueError):
    """Paired fields do not share dimensions."""


class SplitError(FogbenchError, ValueError):
    """The 7:2:1 scene split cannot be realized."""


class IdentifiabilityError(FogbenchError, ArithmeticError):
    """The fog parameters cannot be recovered from the given observation."""
