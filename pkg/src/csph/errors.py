"""Exception hierarchy shared by every csph module."""


class CSPHError(Exception):
    """Base class for all errors raised by csph."""


class DimensionError(CSPHError, ValueError):
    """Matrix or vector shapes are not conformable."""


class SingularMatrixError(CSPHError, ArithmeticError):
    """A linear system has a (numerically) zero pivot."""


class NumericalError(CSPHError, ArithmeticError):
    """Overflow, non-convergence or another floating-point failure."""


class DomainError(CSPHError, ValueError):
    """An argument lies outside the region where a quantity is defined."""


class ValidationError(CSPHError, ValueError):
    """Model parameters violate a structural constraint."""


class FitError(CSPHError, RuntimeError):
    """Every optimizer start failed.

    ``diagnostics`` holds one entry per start describing what went wrong.
    """

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class InputError(CSPHError, ValueError):
    """A file or argument could not be parsed."""
