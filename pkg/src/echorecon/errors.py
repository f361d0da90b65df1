"""Exception types shared across the package."""


class EchoReconError(Exception):
    """Base class for package errors."""


class InvalidArgument(EchoReconError, ValueError):
    """A precondition on an argument was violated."""


class FormatError(EchoReconError):
    """A file could not be parsed or failed structural validation."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc += str(path)
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class NumericalError(EchoReconError):
    """A numeric computation produced a non-finite or unusable result."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"{message} (point index {index})")
        self.index = index


class ConfigError(EchoReconError):
    """A run configuration file is malformed."""
