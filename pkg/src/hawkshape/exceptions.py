"""Exception hierarchy.

Input problems derive from :class:`ValueError`; numerical failures derive
from :class:`ArithmeticError`. The CLI maps the first family to exit code 2
and the second to exit code 1.
"""


class HawkshapeError(Exception):
    pass


# -- invalid input -----------------------------------------------------------


class ValidationError(HawkshapeError, ValueError):
    pass


class NegativeEntry(ValidationError):
    def __init__(self, row, col, value=None):
        self.row, self.col, self.value = int(row), int(col), value
        super().__init__(f"negative influence entry at ({self.row}, {self.col}): {value}")


class NonpositiveOmega(ValidationError):
    def __init__(self, omega):
        self.omega = omega
        super().__init__(f"kernel decay rate must be > 0, got {omega}")


class DimensionMismatch(ValidationError):
    pass


class DuplicateEntry(ValidationError):
    def __init__(self, row, col):
        self.row, self.col = int(row), int(col)
        super().__init__(f"duplicate influence entry at ({self.row}, {self.col})")


class InvalidGrid(ValidationError):
    pass


class EmptyHorizon(ValidationError):
    pass


class UnlabeledLog(ValidationError):
    pass


class MissingTarget(ValidationError):
    pass


class InvalidKind(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class TooLarge(ValidationError):
    pass


# -- numerical failure -------------------------------------------------------


class NumericalError(HawkshapeError, ArithmeticError):
    pass


class NonFinite(NumericalError):
    pass


class ToleranceNotReached(NumericalError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, iterations, residual, message=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            message or f"no convergence after {iterations} iterations (residual {residual:.3e})"
        )


class Breakdown(NumericalError):
    pass


class SingularShift(NumericalError):
    pass


class NotStationary(NumericalError):
    def __init__(self, rho):
        self.rho = rho
        super().__init__(f"spectral radius of A/omega is {rho:.6g} >= 1; no stationary regime")


class ExplosionGuard(NumericalError):
    def __init__(self, cap):
        self.cap = cap
        super().__init__(
            f"event count exceeded {cap}; dynamics are likely near- or super-critical"
        )
