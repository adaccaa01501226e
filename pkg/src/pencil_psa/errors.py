"""Exception types raised across the package."""


class PencilPsaError(Exception):
    """Base class for all errors raised by pencil_psa."""


class DimensionError(PencilPsaError, ValueError):
    """An argument has the wrong shape for the model it is used with."""


class NonConvergence(PencilPsaError, ArithmeticError):
    """An iteration exhausted its budget without meeting its tolerance."""

    def __init__(self, message, iterations=None, step=None):
        super().__init__(message)
        self.iterations = iterations
        self.step = step


class SingularJacobian(PencilPsaError, ArithmeticError):
    pass


class SingularAlgebraicJacobian(SingularJacobian):
    """g_y is numerically singular, so the algebraic variables cannot be eliminated."""


class SingularMassMatrix(PencilPsaError, ArithmeticError):
    pass


class NonFiniteJacobian(PencilPsaError, ArithmeticError):
    pass


class CoefficientMismatch(PencilPsaError, ValueError):
    pass


class ConvergenceFailure(PencilPsaError, ArithmeticError):
    """The underlying eigenvalue iteration failed."""


class NoRootFound(NonConvergence):
    pass


class ZeroEigenvalue(PencilPsaError, ArithmeticError):
    pass


class EmptySpectrum(PencilPsaError, ValueError):
    pass


class ZeroReference(PencilPsaError, ArithmeticError):
    pass


class UnstableAtLowerBound(PencilPsaError, ArithmeticError):
    pass


class CriterionUnmetAtLowerBound(PencilPsaError, ArithmeticError):
    pass


class ModeLost(PencilPsaError, ArithmeticError):
    def __init__(self, message, h=None, mode=None):
        super().__init__(message)
        self.h = h
        self.mode = mode


class InterfaceNonConvergence(NonConvergence):
    pass


class StableAtUpperBound(UserWarning):
    """Search hit its upper cap without finding the boundary; the cap is returned."""
