"""Adjoint-method gradients of sparse linear solves.

Forward ``x = A^{-1} b`` keeps only ``(A, x)``.  Backward solves the single
transposed system ``A^T lam = dL/dx`` and returns

    dL/db      = lam
    dL/dA[i,j] = -lam[i] * x[j]     for every stored entry (i, j)

Memory is O(n + nnz) no matter how many iterations the forward solver ran.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ShapeError
from .linear import SolveOptions, SolveReport, auto_solve, select_backend, solve_with
from .sparse import SparseCoo


@dataclass(frozen=True, eq=False)
class AdjointContext:
    """Everything the backward pass needs: the matrix and the solution."""

    matrix: SparseCoo
    x: np.ndarray

    def content(self) -> dict:
        """Stored arrays by name; this is the complete saved state."""
        return {
            "rows": self.matrix.rows,
            "cols": self.matrix.cols,
            "vals": self.matrix.vals,
            "x": self.x,
        }

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in self.content().values())


@dataclass(frozen=True, eq=False)
class GradientBundle:
    grad_b: np.ndarray
    grad_vals: np.ndarray
    report: SolveReport | None = None


def solve_forward(A: SparseCoo, b, opts: SolveOptions | None = None, backend: str | None = None):
    """Solve ``A x = b`` and capture the backward context.

    Raises ``ConvergenceError`` (with the report attached) if the solve does
    not converge; gradients through unconverged solves are not defined.
    Returns ``(x, ctx, report)``.
    """
    opts = opts or SolveOptions()
    if backend is None:
        x, report = auto_solve(A, b, opts)
    else:
        x, report = solve_with(backend, A, b, opts)
    if not report.converged:
        raise ConvergenceError(f"forward solve failed: {report.message}", report)
    x = np.array(x, dtype=np.float64)
    x.setflags(write=False)
    return x, AdjointContext(A, x), report


def solve_backward(ctx: AdjointContext, grad_x, opts: SolveOptions | None = None,
                   backend: str | None = None, transpose: str = "auto") -> GradientBundle:
    """Gradients w.r.t. ``b`` and the stored values of ``A`` from ``dL/dx``.

    ``transpose="auto"`` reuses ``A`` itself when it is symmetric; ``"explicit"``
    always builds ``A^T``. Exactly one linear solve is issued, none if
    ``grad_x`` is identically zero.
    """
    opts = opts or SolveOptions()
    A = ctx.matrix
    grad_x = np.asarray(grad_x, dtype=np.float64)
    if grad_x.shape != (A.n,):
        raise ShapeError(f"grad_x has shape {grad_x.shape}, expected ({A.n},)")
    if transpose not in ("auto", "explicit"):
        raise ValueError(f"transpose must be 'auto' or 'explicit', got {transpose!r}")

    if not grad_x.any():
        return GradientBundle(np.zeros(A.n), np.zeros(A.nnz), None)

    At = A if transpose == "auto" and A.is_symmetric(tol=0.0) else A.transpose()
    if backend is None:
        backend = select_backend(A)
    lam, report = solve_with(backend, At, grad_x, opts)
    if not report.converged:
        raise ConvergenceError(f"adjoint solve failed: {report.message}", report)
    grad_vals = -lam[A.rows] * ctx.x[A.cols]
    return GradientBundle(lam, grad_vals, report)


def gradcheck(loss_fn, params, analytic_grads, eps: float = 1e-5, indices=None) -> float:
    """Max relative error between ``analytic_grads`` and central differences.

    For each checked parameter ``p``: ``fd = (L(p + eps) - L(p - eps)) / (2 eps)``
    and the error is ``|fd - g| / max(|fd|, |g|, 1e-12)``.  ``indices``
    restricts the check to a subset of parameters.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    params = np.array(params, dtype=np.float64, ndmin=1)
    analytic = np.asarray(analytic_grads, dtype=np.float64).reshape(params.shape)
    indices = range(params.size) if indices is None else indices
    worst = 0.0
    for k in indices:
        plus = params.copy()
        minus = params.copy()
        plus.flat[k] += eps
        minus.flat[k] -= eps
        try:
            fd = (float(loss_fn(plus)) - float(loss_fn(minus))) / (2.0 * eps)
        except Exception as exc:
            raise RuntimeError(f"loss evaluation failed at parameter {k}: {exc}") from exc
        g = float(analytic.flat[k])
        err = abs(fd - g) / max(abs(fd), abs(g), 1e-12)
        worst = max(worst, err)
    return worst
