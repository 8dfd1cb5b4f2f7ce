"""Exception types shared across the package.

The CLI maps these onto exit codes: DataError -> 3, NumericError -> 4.
"""


class EegTileError(Exception):
    """Base class for all eegtile errors."""


class ShapeError(EegTileError):
    """Array dimensions do not satisfy an operation's contract."""


class NumericError(EegTileError):
    """Non-finite values where finite ones are required."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, step=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step


class DataError(EegTileError):
    """Malformed or unusable on-disk data."""


class BadMagicError(DataError):
    """File does not start with the expected magic bytes."""


class TruncatedPayloadError(DataError):
    """File ends before the payload promised by its header."""


class FormatError(DataError):
    """Header or metadata fields are inconsistent or unsupported."""


class TooShortError(DataError):
    """Recording does not cover the requested time span."""
