"""Exception types shared across the package."""


class ContractViolationError(ValueError):
    """An argument violates a documented precondition (infeasible point,
    mismatched base points, non-descent direction, bad config value...)."""


class CapabilityError(RuntimeError):
    """An operation needs a callback the problem does not provide
    (typically a Hessian-vector product)."""


class NumericalError(RuntimeError):
    """A solver hit non-finite values or exhausted a numerical safeguard.

    Carries the partial trace (when available) for post-mortem inspection.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class FormatError(ValueError):
    """A file could not be parsed (matrix input, trace schema mismatch...)."""
