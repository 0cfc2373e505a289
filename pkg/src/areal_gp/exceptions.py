"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad input: malformed files, out-of-range parameters, inconsistent shapes."""


class NumericalError(ArithmeticError):
    """A factorization or other numerical step failed."""
