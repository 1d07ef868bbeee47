"""
Error Types
Every failure the toolkit reports on purpose derives from WaveSegError.
Each subclass also inherits the closest builtin so plain `except ValueError`
style handlers keep working.
"""


class WaveSegError(Exception):
    """Base class for toolkit errors."""


class ShapeError(WaveSegError, ValueError):
    """Shapes are empty, zero-sized, or do not match."""


class FormatError(WaveSegError, ValueError):
    """A file on disk is not in the expected format."""


class ArgumentError(WaveSegError, ValueError):
    """An argument is outside its supported range."""


class UnknownWaveletError(WaveSegError, KeyError):
    """The requested wavelet is not shipped."""

    def __str__(self) -> str:
        # KeyError quotes its message; keep it readable
        return str(self.args[0]) if self.args else ""


class NumericError(WaveSegError, ArithmeticError):
    """A tensor holds NaN or Inf values."""


class UndefinedMetricError(WaveSegError, ZeroDivisionError):
    """A metric has no defined value for the given counts."""


class DivergenceError(WaveSegError, FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, log=None):
        super().__init__(message)
        self.log = list(log or [])
        # filled in by the comparison runner
        self.trace: list = []
        self.logs: dict = {}
