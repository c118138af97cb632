"""Semantic exception hierarchy."""


class GrushinError(Exception):
    """Base class for library errors."""


class DomainError(GrushinError, ValueError):
    """Argument outside the analytic domain of a special function."""


class InverseRangeError(GrushinError, ValueError):
    """Target value outside the range of the monotone function being inverted.

    Raised by ``mu_inverse`` when ``a == -1`` and ``|s| >= pi/2``; signals
    the caller that the pair sits on the vertical distance branch.
    """


class RegimeError(GrushinError, ValueError):
    """Operation called outside its validity regime (preconditions violated)."""


class PrecisionBudgetError(GrushinError, RuntimeError):
    """Requested evaluation cannot reach the target accuracy in this arithmetic."""


class ConvergenceError(GrushinError, RuntimeError):
    """Iterative scheme or quadrature failed to converge within its budget."""
