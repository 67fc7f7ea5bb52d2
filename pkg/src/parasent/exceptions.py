"""Exception hierarchy shared by every parasent module."""


class ParasentError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ParasentError, ValueError):
    """Operand shapes do not line up."""


class DegenerateVectorError(ParasentError, ValueError):
    """A zero-norm vector reached an operation that needs a direction."""


class FormatError(ParasentError, ValueError):
    """Malformed input file. ``lineno`` is 1-based when known."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ConfigError(ParasentError, ValueError):
    """Invalid or inconsistent configuration."""


class NumericalError(ParasentError, ArithmeticError):
    """Non-finite loss or gradient, or a failed gradient check."""
