"""Exception hierarchy.

Each class carries the process exit code the CLI uses when it escapes.
"""


class CoherenceError(Exception):
    exit_code = 2


class ParameterError(CoherenceError, ValueError):
    """Invalid parameter value (bad family parameters, missing sigma, ...)."""

    exit_code = 1


class DomainError(CoherenceError, ValueError):
    """Argument outside the mathematical domain of a function."""

    exit_code = 1


class DataError(CoherenceError, ValueError):
    exit_code = 2


class DegenerateColumnError(DataError):
    def __init__(self, column, detail="column has zero norm after centering"):
        self.column = column
        super().__init__(f"degenerate column {column}: {detail}")


class EmptyPairError(DataError):
    def __init__(self, p, tau):
        self.p, self.tau = p, tau
        super().__init__(f"no admissible pair: p={p} has no column pair with j - i >= tau={tau}")


class NotPositiveDefiniteError(DataError):
    def __init__(self, minor, pivot):
        self.minor, self.pivot = minor, pivot
        super().__init__(
            f"banded covariance is not positive definite: leading minor of order {minor} "
            f"fails (pivot {pivot:.6g})"
        )


class MatrixFormatError(DataError):
    pass


class NumericError(CoherenceError, ArithmeticError):
    exit_code = 3
