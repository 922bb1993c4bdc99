"""Exception taxonomy shared by every twinsearch module."""


class TwinsearchError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(TwinsearchError):
    """Array shapes are incompatible; the message names the offending axis."""


class ConfigError(TwinsearchError):
    """A configuration value is invalid or layers cannot be assembled."""


class DataError(TwinsearchError):
    """Input data is malformed, missing, or degenerate."""


class NumericError(TwinsearchError):
    """A computation produced non-finite values."""


class ProtocolError(TwinsearchError):
    """An operation was invoked against state that violates its protocol."""
