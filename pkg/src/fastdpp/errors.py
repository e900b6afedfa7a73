"""Exception types shared across the package."""


class DPPError(Exception):
    """Base class for all errors raised by fastdpp."""


class ContractViolation(DPPError, ValueError):
    """A caller broke a documented precondition (shapes, ranges, lengths)."""


class KernelValidationError(DPPError, ValueError):
    """A kernel or similarity matrix failed symmetry/PSD/range checks."""


class NumericalFailure(DPPError, ArithmeticError):
    """Computation produced NaN or otherwise cannot proceed numerically."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DegeneratePivotError(NumericalFailure):
    """A pivot d_j was not strictly positive where a division by it is needed."""


class DataError(DPPError, ValueError):
    """Input data (ratings, task files) is malformed or empty after filtering."""
