"""Exception types raised across the package."""


class BallastError(Exception):
    """Base class for all package errors."""


class InvalidParameter(BallastError, ValueError):
    """A parameter is outside the domain an operation accepts."""


class InvalidState(BallastError, RuntimeError):
    """An operation was applied to an object in an unusable state."""


class GenerationFailure(BallastError, RuntimeError):
    """A randomized generator gave up after exhausting its attempt budget."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


class ConfigError(BallastError, ValueError):
    """An experiment config failed validation.

    ``field`` names the first offending field, dotted (``process.g``).
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
