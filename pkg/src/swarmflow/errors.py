"""Error taxonomy shared by the library, the service and the CLI.

Each category maps to a stable process exit code so that scripted callers
can tell configuration mistakes apart from bad input data and from numeric
blow-ups during training.
"""


class SwarmflowError(Exception):
    """Base class for all pipeline errors.

    `details` optionally carries an itemized violation list (used when
    several problems are reported at once, e.g. config validation).
    """

    category = "internal"
    exit_code = 1

    def __init__(self, message: str, details: list[str] | None = None):
        super().__init__(message)
        self.details = list(details) if details else []


class ConfigError(SwarmflowError):
    """Invalid configuration or parameter invariant violation."""

    category = "config"
    exit_code = 2


class DataError(SwarmflowError):
    """Unreadable, malformed, or dimensionally inconsistent input data."""

    category = "data"
    exit_code = 3


class NumericError(SwarmflowError):
    """Numeric failure during training or evaluation (non-finite loss etc.)."""

    category = "numeric"
    exit_code = 4
