"""Error classes shared by the on-disk formats.

Everything derives from FormatError (itself a ValueError) so callers can
catch one class for "this file is bad" while tests can pin down exactly
which way it is bad.
"""


class FormatError(ValueError):
    """A file does not conform to its declared format."""


class MalformedHeaderError(FormatError):
    """Header is missing fields or carries values that make no sense."""


class UnsupportedFormatError(FormatError):
    """Recognizable family, but a variant this package does not handle."""


class DimensionOverflowError(FormatError):
    """Declared geometry exceeds the supported cell budget."""


class TruncatedPayloadError(FormatError):
    """Payload ends before the declared amount of data."""


class CorruptPayloadError(FormatError):
    """Payload contains tokens or values that cannot be decoded."""


class ChecksumError(FormatError):
    """Stored checksum does not match the payload."""
