"""Exception hierarchy shared across the package."""


class PeakcastError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(PeakcastError):
    """A data file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptySeriesError(PeakcastError):
    """A series ended up with no usable observations."""


class ConfigurationError(PeakcastError):
    """An operation was invoked with inconsistent or unusable settings."""


class NumericalBlowupError(PeakcastError):
    """The ODE state left the admissible region during integration."""


class HistoryEmptyError(PeakcastError):
    """No usable historical season could be extracted."""
