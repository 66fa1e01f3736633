"""Exception types raised across the package."""


class QlidarError(Exception):
    """Base class for all package errors."""


class InvalidParameters(QlidarError, ValueError):
    pass


class DegenerateHerald(QlidarError, ValueError):
    """QI probabilities requested while the idler never fires."""


class DegenerateProbability(QlidarError, ValueError):
    """A click probability of exactly 0 or 1 makes the LLV undefined."""


class CountExceedsTrials(QlidarError, ValueError):
    pass


class WindowTooLarge(QlidarError, ValueError):
    pass


class EmptySeries(QlidarError, ValueError):
    pass


class NoConvergence(QlidarError, RuntimeError):
    pass


class InsufficientStatistics(QlidarError, RuntimeError):
    pass


class UnsortedStream(QlidarError, ValueError):
    pass


class FormatError(QlidarError, ValueError):
    def __init__(self, message, record=None):
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)
        self.record = record


class NonMonotonicTimestamps(FormatError):
    pass


class RateExceedsBrightness(QlidarError, ValueError):
    pass


class NegativeNetRate(QlidarError, ValueError):
    pass


class NoRoot(QlidarError, ValueError):
    pass


class ConfigError(QlidarError, ValueError):
    """Config problem; message carries the offending path and field."""
