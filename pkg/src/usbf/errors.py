"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """A caller passed a value outside an operation's precondition."""


class ConfigurationError(ValueError):
    """The acquisition setup cannot represent the requested scene."""


class MeasurementFailed(RuntimeError):
    """An image metric could not be evaluated on the given data."""


class FormatError(ValueError):
    """A container file is malformed.

    ``offset`` is the byte position at which decoding failed.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersion(FormatError):
    """A container file declares a version this reader does not understand."""
