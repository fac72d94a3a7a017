"""Exception types shared across the package.

Two failure families are distinguished so callers (and the CLI exit-code
mapping) can tell bad input apart from numerical breakdown.
"""


class DataError(ValueError):
    """Malformed or inconsistent input data (parse errors, invariant breaks)."""


class NumericalError(RuntimeError):
    """Numerical failure: singular matrix, ill-conditioning, refused computation."""
