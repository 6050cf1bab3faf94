"""Exception hierarchy shared by every sparsla module."""


class SparslaError(Exception):
    """Base class for all library errors."""


class ShapeError(SparslaError, ValueError):
    """Array lengths or matrix dimensions are inconsistent."""


class IndexBoundsError(SparslaError, IndexError):
    """A row or column index falls outside the matrix shape."""


class DenseLimitError(SparslaError, MemoryError):
    """A dense conversion would exceed the configured size cap."""


class MatrixMarketError(SparslaError, ValueError):
    """Malformed Matrix Market input.

    ``lineno`` is the 1-based line number of the offending line, when known.
    """

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class SingularMatrixError(SparslaError, ArithmeticError):
    """A direct factorization met a zero pivot."""


class ConvergenceError(SparslaError):
    """An iterative method did not converge.

    The solver report (if any) is attached as ``report``.
    """

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class SymmetryError(SparslaError, ValueError):
    """An operation requiring a symmetric matrix received a nonsymmetric one."""


class DegenerateEigenvalueError(SparslaError, ArithmeticError):
    """Eigenvalue sensitivities are undefined for repeated eigenvalues."""


class LineSearchError(SparslaError):
    """Backtracking line search shrank the step below its lower bound."""


class TransportError(SparslaError):
    """Communication failure, timeout, or protocol violation between ranks."""
