"""Exception types shared across the package.

The CLI maps these onto process exit codes, so keep the hierarchy flat.
"""


class OpdynError(Exception):
    """Base class for all package errors."""


class InvalidArgument(OpdynError, ValueError):
    pass


class ParseError(OpdynError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TieError(OpdynError):
    """An argmax over tallies had more than one maximiser."""

    def __init__(self, message, vertex=None):
        self.vertex = vertex
        super().__init__(message)


class NoAnchorError(OpdynError):
    """A cycle state alternates everywhere, so no vertex pair is stable."""


class ConstructionFailure(OpdynError):
    pass


class NumericalFailure(OpdynError):
    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class BudgetExceeded(OpdynError):
    pass


class Unsupported(OpdynError):
    pass
