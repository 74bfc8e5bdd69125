"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(ValueError):
    """Model, grid, strategy or run configuration is invalid."""


class CFLError(ConfigurationError):
    """The explicit grid step violates the monotonicity (CFL) condition."""


class NumericalFailure(ArithmeticError):
    """A non-finite value appeared during a computation."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node
