"""Exception types raised across the package."""


class FmmsError(Exception):
    """Base class for all package errors."""


class ZeroVector(FmmsError, ValueError):
    pass


class NonFinite(FmmsError, ValueError):
    pass


class InvalidConfig(FmmsError, ValueError):
    pass


class ConfigError(FmmsError, KeyError):
    """Missing or malformed key in an experiment config."""

    def __init__(self, key, message=""):
        self.key = key
        self.message = message or f"bad config key: {key}"
        super().__init__(self.message)

    def __str__(self):
        return self.message


class FormatVersionMismatch(FmmsError, ValueError):
    pass


class ShapeMismatch(FmmsError, ValueError):
    pass


class TokenOutOfRange(FmmsError, IndexError):
    pass


class InvalidScale(FmmsError, ValueError):
    pass


class DivergedTraining(FmmsError, RuntimeError):
    pass


class DegenerateGallery(FmmsError, ValueError):
    pass


class EmptyDenominator(FmmsError, ZeroDivisionError):
    pass


class IoError(FmmsError, OSError):
    pass
