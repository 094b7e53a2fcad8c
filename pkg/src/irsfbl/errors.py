"""Exception hierarchy shared by all modules."""


class IrsFblError(Exception):
    """Base class for every error raised by :mod:`irsfbl`."""


class QuadratureError(IrsFblError):
    """Numerical integration did not reach the requested tolerance."""


class NotPSDError(IrsFblError, ValueError):
    """A correlation matrix is not Hermitian positive semidefinite."""


class DomainError(IrsFblError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConvergenceError(IrsFblError):
    """The fixed-point iteration did not converge.

    Attributes
    ----------
    residual : float
        Relative residual after the last iteration.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message, residual, iterations):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class StabilityError(IrsFblError):
    """A second-order quantity left its admissible region.

    Raised when the parameters are outside the region where the Gaussian
    approximation holds (for example a non-positive stability factor).
    """

    def __init__(self, quantity, value):
        super().__init__(f"stability violation: {quantity} = {value!r}")
        self.quantity = quantity
        self.value = value


class SchemaError(IrsFblError, ValueError):
    """A scenario file does not follow the expected layout."""
