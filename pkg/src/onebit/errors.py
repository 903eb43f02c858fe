"""Exception hierarchy shared by the toolkit."""


class OneBitError(Exception):
    """Base class for all toolkit errors."""


class DomainError(OneBitError, ValueError):
    """A parameter lies outside the domain an operation is defined on."""


class CapabilityError(OneBitError):
    """A loss was asked for a derivative it does not have."""


class NumericError(OneBitError, ArithmeticError):
    """A numerical routine produced a non-finite value or failed internally."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class DivergedError(OneBitError):
    """The fixed-point iteration did not converge.

    ``trajectory`` holds the ``(mu, alpha, lambda)`` iterates visited.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = [] if trajectory is None else trajectory


class UnboundedSolutionError(DivergedError):
    """alpha, lambda or mu ran off to zero or infinity."""


class OracleError(OneBitError):
    """The nested saddle-point optimisation failed."""


class BracketError(OneBitError):
    """A root was not bracketed by the search interval."""


class UnboundedSaddleError(OracleError):
    """The min-max problem has no finite saddle (parameters run to 0 or infinity)."""
