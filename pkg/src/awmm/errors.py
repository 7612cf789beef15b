"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes do not line up."""


class StateError(RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class NumericError(ArithmeticError):
    """A NaN or Inf showed up where finite values are required."""


class SimplexError(ValueError):
    """A weight vector is not on the probability simplex."""


class DataError(ValueError):
    """Dataset content or layout is unusable."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(DataError):
    """A value violates the dataset schema (e.g. label outside {0, 1})."""
