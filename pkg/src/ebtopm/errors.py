"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid user-supplied data, arguments or configuration."""


class DomainError(InputError):
    """A numeric argument outside the function's domain (non-finite, sigma <= 0)."""


class DegeneratePriorError(InputError):
    """A point-mass prior was given where a nondegenerate one is required."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to converge or produced a non-finite result."""
