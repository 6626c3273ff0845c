"""Exception hierarchy shared by every bdss module."""


class BDSSError(Exception):
    """Base class for all errors raised by bdss."""


class ConfigurationError(BDSSError, ValueError):
    """Inconsistent shapes, channel counts or settings."""


class GeometryError(BDSSError, ValueError):
    """A spatial operation would produce an empty or negative extent."""


class DomainError(BDSSError, ValueError):
    """A numeric argument lies outside the domain of the operation."""


class FormatError(BDSSError, ValueError):
    """A file on disk does not follow the expected binary or text layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingError(BDSSError, RuntimeError):
    """Training diverged or could not start."""

