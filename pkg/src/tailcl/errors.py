"""Exception types shared across the package."""


class TailclError(Exception):
    """Base class for all package errors."""


class ShapeError(TailclError):
    """Array dimensions do not chain or do not match a contract."""


class ParameterError(TailclError):
    """A scalar argument or configuration value is outside its domain."""


class DegenerateNormError(TailclError):
    """A vector that must be normalized has (near-)zero Euclidean norm."""


class CapacityError(TailclError):
    """A sample pool cannot cover the requested draw."""


class PoolParseError(TailclError):
    """A dataset file does not conform to the CSV schema."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericOverflowError(TailclError):
    """A non-finite value appeared in a numeric computation."""


class ContractViolation(TailclError):
    """A caller invoked an operation outside its stated contract."""
