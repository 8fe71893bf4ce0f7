"""Exception types shared across the package.

The CLI maps these onto exit codes: ``DataError`` -> 2, ``NumericError`` -> 3.
"""


class DataError(ValueError):
    """Input data cannot be used (bad file, bad values, bad shape)."""


class ParseError(DataError):
    pass


class SchemaError(DataError):
    pass


class NumericError(ArithmeticError):
    """A numerical routine produced a non-finite or singular result."""
