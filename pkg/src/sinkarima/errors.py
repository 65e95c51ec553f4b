"""Exception hierarchy.

Two families matter to callers: ``DataError`` (bad or insufficient input)
and ``NumericalError`` (estimation could not produce a usable model). The
CLI maps them to exit codes 2 and 3.
"""


class SinkArimaError(Exception):
    """Base class for every error raised by this package."""


class DataError(SinkArimaError, ValueError):
    pass


class NumericalError(SinkArimaError, ArithmeticError):
    pass


# --- input / shape problems -------------------------------------------------

class SeriesTooShort(DataError):
    pass


class OrderTooHigh(DataError):
    pass


class LagTooLarge(DataError):
    pass


class DegenerateSeries(DataError):
    """Zero sample variance, so correlations are undefined."""


class HorizonTooLarge(DataError):
    pass


class InsufficientHistory(DataError):
    pass


class InvalidLevel(DataError):
    pass


class InvalidProcessSpec(DataError):
    pass


class ModelMissing(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateTimestamp(DataError):
    pass


class EmptyGroup(DataError):
    pass


class IndexOutOfBounds(DataError, IndexError):
    pass


class OverlappingSegments(DataError):
    pass


class ZeroActual(DataError, ZeroDivisionError):
    """Percentage error requested against an actual value of zero."""


# --- estimation problems ----------------------------------------------------

class NumericalSingularity(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class DegenerateVariance(NumericalError):
    pass


class NotStationarizable(NumericalError):
    pass


class AllFitsFailed(NumericalError):
    pass


class RefitFailed(NumericalError):
    pass
