"""Exception hierarchy shared by all delaylab modules."""


class DelayLabError(Exception):
    """Base class for every error raised by the package."""


class DimensionError(DelayLabError, ValueError):
    pass


class PreconditionError(DelayLabError, ValueError):
    pass


class NumericRangeError(DelayLabError, ArithmeticError):
    pass


class SingularMatrixError(DelayLabError, ArithmeticError):
    """Raised when a pivot drops below the conditioning threshold.

    ``pivot_ratio`` is the smallest accepted pivot over the largest entry of
    the matrix; ``cond`` is a 1-norm condition estimate (may be ``inf``).
    """

    def __init__(self, message, pivot_ratio=0.0, cond=float("inf")):
        super().__init__(message)
        self.pivot_ratio = pivot_ratio
        self.cond = cond


class ConvergenceError(DelayLabError, RuntimeError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = tuple(history)


class GridAlignmentError(DelayLabError, ValueError):
    pass


class AdmissibilityError(DelayLabError, ArithmeticError):
    pass


class SpectrumError(DelayLabError, ArithmeticError):
    pass


class DomainError(DelayLabError, ValueError):
    pass


class ConfigError(DelayLabError, ValueError):
    pass


class FitError(DelayLabError, ValueError):
    pass


class SimulationOverflowError(DelayLabError, OverflowError):
    def __init__(self, message, last_valid_time):
        super().__init__(message)
        self.last_valid_time = last_valid_time
