"""Exception hierarchy shared by the solver, certificates and CLI."""


class PadmError(Exception):
    """Base class for all errors raised by this package."""


class NumericalError(PadmError):
    """An objective or iterate became non-finite."""


class InfeasibleError(PadmError):
    """A vector violates the sparsity budget ``||x||_0 <= s``."""


class CapacityError(PadmError):
    """An enumeration would exceed its configured size bound."""


class UndecidedError(PadmError):
    """A restricted solve did not reach the requested accuracy.

    ``gap`` carries the best available estimate of the quantity that could
    not be decided.
    """

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class InternalError(PadmError):
    """An internal invariant was violated."""


class ParseError(PadmError):
    """Malformed input file; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DimensionError(PadmError):
    """Requested dimensions exceed what the input provides."""
