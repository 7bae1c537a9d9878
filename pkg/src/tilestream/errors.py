"""Exception types shared across the package.

Validation problems (bad input values, malformed files, inconsistent
configuration) derive from ``ValueError`` so callers can catch them as a group;
the CLI maps them to exit code 2.
"""


class InvalidInput(ValueError):
    """An argument violates an operation's precondition."""


class TraceFormatError(InvalidInput):
    """A trace file could not be parsed or failed validation."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ConfigError(ValueError):
    """Configuration is inconsistent or references missing resources."""


class TrainingError(RuntimeError):
    """Training diverged (NaN/inf loss) and was aborted."""
