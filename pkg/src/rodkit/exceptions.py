class RodkitError(Exception):
    """Base class for all errors raised by rodkit."""


class ConfigError(RodkitError, ValueError):
    """Invalid configuration or parameter value."""


class DimensionError(RodkitError, ValueError):
    """Array shapes do not agree with each other or with the configuration."""


class DomainError(RodkitError, ValueError):
    """Argument outside the mathematical domain of a function."""


class NumericalError(RodkitError, FloatingPointError):
    """Non-finite values appeared during a numerical computation."""
