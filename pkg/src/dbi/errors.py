"""Exception hierarchy.

The CLI maps ``ConfigError`` to exit status 2 and ``DataError`` to 3.
"""


class ConfigError(ValueError):
    """Invalid experiment or component configuration."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class DataError(ValueError):
    """Malformed or unusable observed data."""


class NoObservationError(DataError):
    """An estimate is undefined because nothing relevant was observed."""


class PositivityError(DataError):
    """A played arm carries a non-positive propensity."""


class DoubleDeliveryError(RuntimeError):
    """A record was delivered to a policy state more than once."""
