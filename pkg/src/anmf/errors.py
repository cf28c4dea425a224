"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """An argument lies outside the domain where the operation is defined."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed (singular matrix, no convergence, ...)."""

    def __init__(self, message, condition=None):
        if condition is not None:
            message = f"{message} (condition number ~ {condition:.3g})"
        super().__init__(message)
        self.condition = condition
