"""Exception types shared across the package."""


class HoldQError(Exception):
    """Base class for package errors."""


class ConfigError(HoldQError, ValueError):
    """Dimension or configuration mismatch."""


class DataError(HoldQError, ValueError):
    """Malformed or unusable market data."""


class EpisodeDone(HoldQError):
    """Raised when stepping an environment that has run out of data."""


class NonFiniteQ(HoldQError, FloatingPointError):
    """A network produced NaN or infinite Q values."""
