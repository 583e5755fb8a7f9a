"""Exception and warning classes shared across the package."""


class DimensionError(ValueError):
    """Shapes, supports or backends of the operands do not match."""


class SupportError(ValueError):
    """A constraint cannot be met on the given discrete support."""


class SizeError(ValueError):
    """A discrete problem exceeds the exact solver's size cap."""


class DomainError(ValueError):
    """A parameter lies outside the domain where the operation is defined."""


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its iteration budget.

    Attributes
    ----------
    residual : float
        The stopping residual reached at the last iteration.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ZeroMassRowWarning(UserWarning):
    """A disintegration met a marginal atom carrying no mass."""
