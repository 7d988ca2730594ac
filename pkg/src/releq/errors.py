"""Exception types shared across the package."""


class DimensionMismatch(ValueError):
    """A matrix or vector does not have the shape the phase space requires."""


class DomainError(ValueError):
    """An expression was evaluated outside its domain (sqrt of a non-positive value)."""


class ValidationError(ValueError):
    """A structural invariant of a model failed.

    Carries the name of the failed check so callers can report it.
    """

    def __init__(self, check: str, message: str = ""):
        self.check = check
        super().__init__(f"{check}: {message}" if message else check)


class ParseError(ValueError):
    """Configuration or expression text could not be parsed."""

    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class NoKernel(ValueError):
    """The augmented Hessian has no kernel at the requested tolerance."""


class NoConvergence(RuntimeError):
    """An iterative solve left its convergence neighborhood."""


class InsufficientSamples(ValueError):
    """Not enough branch samples for the requested extrapolation."""
