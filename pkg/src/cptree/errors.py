"""Exception hierarchy shared by the library and the command line driver."""


class CptreeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CptreeError, ValueError):
    """Invalid parameter or configuration value."""


class ParseError(CptreeError, ValueError):
    """Malformed example line."""

    def __init__(self, message, line_no=None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class LabelNotFoundError(CptreeError, LookupError):
    """A label that the model has never placed was requested."""


class CapacityError(CptreeError, RuntimeError):
    """A fixed-capacity model ran out of label slots."""


class PreconditionError(CptreeError, ValueError):
    """An operation was called in a state where it is not defined."""


class ModelFormatError(CptreeError, ValueError):
    """A model file is corrupt, truncated or of an unknown version."""
