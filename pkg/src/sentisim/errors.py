"""Exception hierarchy. Each family maps onto a stable CLI exit code."""


class SentisimError(Exception):
    exit_code = 2


class ConfigError(SentisimError):
    """Bad usage, configuration or template input."""

    exit_code = 1


class DataError(SentisimError):
    """Input data that violates a schema or an operation's preconditions."""

    exit_code = 2


class SchemaError(DataError):
    pass


class ParseError(DataError):
    """A model completion could not be mapped onto a scale category."""


class InfeasibleFrame(DataError):
    pass


class StatsError(DataError):
    pass


class BackendError(SentisimError):
    """Model backend failed; ``status`` carries the last HTTP status if any."""

    exit_code = 3

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class AuthError(BackendError):
    pass


class MalformedResponse(BackendError):
    pass
