"""
Exception hierarchy for the shift-correction pipeline.

Two families: data problems (bad input, wrong shapes, not enough rows)
and numerical failures (degenerate covariance, singular Cayley system,
diverging objective). The CLI maps them to exit codes 3 and 4.
"""

from typing import Optional

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class ShiftCorrectionError(Exception):
    """Base class for every error raised by this package."""

    exit_code = EXIT_DATA


###########################################
# Data errors
###########################################

class DataError(ShiftCorrectionError):
    exit_code = EXIT_DATA


class InsufficientInstancesError(DataError):
    def __init__(self, rows: int, required: int):
        super().__init__(f"insufficient instances: got {rows} rows, need at least {required}")
        self.rows = rows
        self.required = required


class InvalidDataError(DataError):
    def __init__(self, detail: str = ""):
        message = "invalid data" if not detail else f"invalid data: {detail}"
        super().__init__(message)


class DimensionMismatchError(DataError):
    def __init__(self, what: str, expected, got):
        super().__init__(f"dimension mismatch for {what}: expected {expected}, got {got}")


class RankDeficientError(DataError):
    def __init__(self, requested: int, available: int):
        super().__init__(
            f"rank deficient for requested p: requested {requested}, "
            f"only {available} positive eigenvalues"
        )
        self.requested = requested
        self.available = available


class DegenerateLabelsError(DataError):
    def __init__(self, detail: str = ""):
        message = "degenerate labels" if not detail else f"degenerate labels: {detail}"
        super().__init__(message)


class CsvParseError(DataError):
    """Raised while reading a CSV dataset; `line` is 1-based."""

    def __init__(self, path: str, line: Optional[int], detail: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"parse error at {where}: {detail}")
        self.path = path
        self.line = line


###########################################
# Numerical errors
###########################################

class NumericalError(ShiftCorrectionError):
    exit_code = EXIT_NUMERICAL


class AsymmetricMatrixError(NumericalError):
    def __init__(self, deviation: float):
        super().__init__(f"matrix is not symmetric (max deviation {deviation:.3e})")
        self.deviation = deviation


class DegenerateCovarianceError(NumericalError):
    def __init__(self, detail: str = ""):
        message = "degenerate covariance" if not detail else f"degenerate covariance: {detail}"
        super().__init__(message)


class NotOrthogonalError(NumericalError):
    def __init__(self, deviation: float):
        super().__init__(f"matrix is not orthogonal (max |Q^T Q - I| = {deviation:.3e})")
        self.deviation = deviation


class CayleySingularError(NumericalError):
    def __init__(self, tau: float):
        super().__init__(f"cayley singular: I + (tau/2)A is numerically singular at tau={tau:g}")
        self.tau = tau


class ObjectiveDivergedError(NumericalError):
    def __init__(self, iteration: int):
        super().__init__(f"objective diverged: non-finite objective or gradient at iteration {iteration}")
        self.iteration = iteration


class AllRestartsFailedError(NumericalError):
    def __init__(self, n_restarts: int, last_error: str):
        super().__init__(f"all {n_restarts} restarts failed; last error: {last_error}")


def exit_code_for(exc: BaseException) -> int:
    """Map an exception raised by a CLI handler to a process exit code."""
    if isinstance(exc, ShiftCorrectionError):
        return exc.exit_code
    return EXIT_NUMERICAL if isinstance(exc, ArithmeticError) else EXIT_DATA
