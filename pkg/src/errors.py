"""Exception hierarchy shared by the library, the CLI and the HTTP service.

Every error carries the process exit code the CLI reports for it.
"""
from typing import Optional


class PrivexError(Exception):
    exit_code = 1


class UsageError(PrivexError):
    """Bad command-line flags or an invalid configuration file."""

    exit_code = 1


class DataError(PrivexError, ValueError):
    """Malformed input data or arguments outside their domain."""

    exit_code = 2


class DataFormatError(DataError):
    def __init__(self, message: str, path: Optional[str] = None, row: Optional[int] = None):
        self.path = path
        self.row = row
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        prefix = f"{': '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class DimensionError(DataError):
    def __init__(self, what: str, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected dimension {expected}, got {got}")


class NumericalError(PrivexError, ArithmeticError):
    exit_code = 3


class ConvergenceError(NumericalError):
    def __init__(self, message: str, iterations: int, violation: float):
        self.iterations = iterations
        self.violation = violation
        super().__init__(f"{message} after {iterations} iterations (violation {violation:.3e})")


class PreconditionError(NumericalError):
    """An explanation method was asked to run outside its preconditions."""


class PrototypeError(NumericalError):
    def __init__(self, label: int, best_margin: float):
        self.label = label
        self.best_margin = best_margin
        super().__init__(
            f"no prototype for class {label:+d} satisfies the confidence condition "
            f"(best margin {best_margin:.6g})"
        )
