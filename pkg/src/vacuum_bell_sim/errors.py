"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid argument or configuration (CLI exit status 1)."""


class NumericalError(ArithmeticError):
    """Non-finite or otherwise unusable numerical result (CLI exit status 2)."""
