"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A rule, attack or experiment was configured with invalid parameters.

    ``field`` names the offending parameter when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DimensionError(ValueError):
    """Vectors of different dimension were combined."""


class NonFiniteError(ArithmeticError):
    """A NaN or infinite value was produced or supplied."""


class ConditionViolation(ConfigurationError):
    """A constructed instance was requested outside the hypotheses it needs."""
