"""Exception hierarchy shared by every module of the package."""


class CompactSSLError(Exception):
    """Base class for all package errors."""


class SpecError(CompactSSLError):
    """Invalid network specification (bad hyperparameters, shape inference failure)."""


class DimensionError(CompactSSLError):
    """Input tensor shape does not match what the network expects."""


class NumericError(CompactSSLError):
    """A non-finite value appeared where finite values are required."""


class ParameterError(CompactSSLError, ValueError):
    """An argument is outside its admissible range."""


class DegenerateError(CompactSSLError):
    """Statistic undefined for the given data (e.g. zero variance)."""


class DataError(CompactSSLError):
    """Dataset is empty, unreadable or otherwise unusable."""


class FormatError(CompactSSLError):
    """Malformed model file. ``offset`` is the byte position where decoding failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
