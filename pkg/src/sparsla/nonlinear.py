"""Nonlinear solvers: damped Newton with adjoint backward, Picard, Anderson.

Newton stores only ``(u*, J, theta)``; the backward pass is one transposed
Jacobian solve followed by a user-supplied parameter VJP:

    J^T lam = dL/du,   dL/dtheta = -lam^T dF/dtheta
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConvergenceError, LineSearchError, ShapeError, SingularMatrixError
from .linear import SolveOptions, auto_solve, count_solves, dense_threshold
from .sparse import SparseCoo, from_dense

ARMIJO_C = 1e-4
ALPHA_MIN = 2.0 ** -20
ANDERSON_REG = 1e-12
ANDERSON_MAX_COND = 1e12


@dataclass(frozen=True)
class ResidualSystem:
    """``F(u, theta)``, its Jacobian ``dF/du`` and the VJP ``lam^T dF/dtheta``."""

    residual: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray, np.ndarray], SparseCoo]
    vjp_theta: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None


@dataclass(frozen=True, eq=False)
class NewtonContext:
    u: np.ndarray
    jacobian: SparseCoo
    theta: np.ndarray

    def content(self) -> dict:
        return {
            "u": self.u,
            "jac_rows": self.jacobian.rows,
            "jac_cols": self.jacobian.cols,
            "jac_vals": self.jacobian.vals,
            "theta": self.theta,
        }

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in self.content().values())


@dataclass
class NonlinearReport:
    newton_iterations: int = 0
    linear_solves_forward: int = 0
    linear_solves_backward: int = 0
    final_residual_norm: float = math.inf
    line_search_steps_total: int = 0
    converged: bool = False
    residual_history: list = field(default_factory=list)  # ||F|| per iterate


@dataclass(frozen=True)
class FixedPointReport:
    iterations: int
    residual_norm: float
    converged: bool
    fallback_steps: int = 0


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def newton_solve(sys: ResidualSystem, u0, theta, tol: float = 1e-10, max_iter: int = 50,
                 jacobian_at: str = "solution"):
    """Newton-Raphson with Armijo backtracking on ``||F||``.

    Each step solves ``J du = -F`` with :func:`auto_solve` at absolute
    tolerance ``min(0.1 ||F||, tol)``, then halves ``alpha`` from 1 until
    ``||F(u + alpha du)|| <= (1 - 1e-4 alpha) ||F(u)||``.

    ``jacobian_at="solution"`` stores ``J(u*)`` in the context (one extra
    Jacobian evaluation, no solve). ``"last_iterate"`` keeps the matrix from
    the final Newton step instead, which was evaluated one update before
    ``u*``; its gradient bias scales with the size of that last step.

    Returns ``(u*, NewtonContext, NonlinearReport)``; a non-converged run is
    reported, not raised.
    """
    if jacobian_at not in ("solution", "last_iterate"):
        raise ValueError(f"jacobian_at must be 'solution' or 'last_iterate', got {jacobian_at!r}")
    u = np.array(u0, dtype=np.float64)
    theta = _frozen(theta)
    F = np.asarray(sys.residual(u, theta), dtype=np.float64)
    if F.shape != u.shape:
        raise ShapeError(f"residual has shape {F.shape}, expected {u.shape}")
    fnorm = float(np.linalg.norm(F))
    report = NonlinearReport(residual_history=[fnorm])
    J = None
    while fnorm > tol and report.newton_iterations < max_iter:
        k = report.newton_iterations
        J = sys.jacobian(u, theta)
        if J.shape != (u.size, u.size):
            raise ShapeError(f"Jacobian has shape {J.shape}, expected {(u.size, u.size)}")
        opts = SolveOptions(atol=max(min(0.1 * fnorm, tol), 1e-300))
        try:
            du, lin = auto_solve(J, -F, opts)
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"Newton iteration {k}: {exc}") from exc
        report.linear_solves_forward += 1
        if not np.all(np.isfinite(du)):
            raise SingularMatrixError(f"Newton iteration {k}: Jacobian solve produced non-finite step")

        alpha = 1.0
        while True:
            u_try = u + alpha * du
            F_try = np.asarray(sys.residual(u_try, theta), dtype=np.float64)
            f_try = float(np.linalg.norm(F_try))
            if f_try <= (1.0 - ARMIJO_C * alpha) * fnorm:
                break
            alpha *= 0.5
            report.line_search_steps_total += 1
            if alpha < ALPHA_MIN:
                raise LineSearchError(
                    f"Newton iteration {k}: step length fell below 2^-20 (||F|| = {fnorm:.3e})"
                )
        u, F, fnorm = u_try, F_try, f_try
        report.newton_iterations += 1
        report.residual_history.append(fnorm)

    if J is None or jacobian_at == "solution":
        J = sys.jacobian(u, theta)
    report.final_residual_norm = fnorm
    report.converged = fnorm <= tol
    ctx = NewtonContext(_frozen(u), J, theta)
    return ctx.u, ctx, report


def newton_backward(ctx: NewtonContext, sys: ResidualSystem, grad_u, report: NonlinearReport | None = None):
    """``dL/dtheta`` from ``dL/du*`` with one transposed Jacobian solve."""
    if sys.vjp_theta is None:
        raise ValueError("ResidualSystem has no vjp_theta; cannot differentiate w.r.t. theta")
    grad_u = np.asarray(grad_u, dtype=np.float64)
    if grad_u.shape != ctx.u.shape:
        raise ShapeError(f"grad_u has shape {grad_u.shape}, expected {ctx.u.shape}")
    J = ctx.jacobian
    Jt = J if J.is_symmetric(tol=0.0) else J.transpose()
    with count_solves() as tally:
        lam, lin = auto_solve(Jt, grad_u, SolveOptions(atol=1e-12 * max(1.0, float(np.linalg.norm(grad_u)))))
    if not lin.converged:
        raise ConvergenceError(f"adjoint Jacobian solve failed: {lin.message}", lin)
    if report is not None:
        report.linear_solves_backward = tally.total
    return -np.asarray(sys.vjp_theta(ctx.u, ctx.theta, lam), dtype=np.float64)


def _as_map(g):
    def call(u):
        return np.asarray(g(u), dtype=np.float64)
    return call


def picard_solve(g, u0, tol: float = 1e-10, max_iter: int = 1000):
    """Plain fixed-point iteration ``u <- g(u)`` until ``||g(u) - u|| <= tol``."""
    g = _as_map(g)
    u = np.array(u0, dtype=np.float64)
    gu = g(u)
    res = float(np.linalg.norm(gu - u))
    k = 0
    while not res <= tol and k < max_iter and math.isfinite(res):
        u = gu
        gu = g(u)
        res = float(np.linalg.norm(gu - u))
        k += 1
    return u, FixedPointReport(k, res, res <= tol)


def anderson_solve(g, u0, m: int = 5, tol: float = 1e-10, max_iter: int = 1000):
    """Type-II Anderson acceleration with window ``m``.

    Mixing weights solve ``min ||f_k - dF gamma||`` through Tikhonov-regularized
    normal equations; when those are too ill-conditioned the iteration takes
    a plain Picard step instead.
    """
    if m < 1:
        raise ValueError("window m must be at least 1")
    g = _as_map(g)
    u = np.array(u0, dtype=np.float64)
    gu = g(u)
    f = gu - u
    res = float(np.linalg.norm(f))
    dG, dF = [], []
    k = 0
    fallbacks = 0
    while not res <= tol and k < max_iter and math.isfinite(res):
        if dF:
            DF = np.column_stack(dF)
            DG = np.column_stack(dG)
            H = DF.T @ DF
            H += ANDERSON_REG * max(1.0, float(np.trace(H))) * np.eye(H.shape[0])
            if np.linalg.cond(H) < ANDERSON_MAX_COND:
                gamma = np.linalg.solve(H, DF.T @ f)
                u_next = gu - DG @ gamma
            else:
                u_next = gu
                fallbacks += 1
        else:
            u_next = gu
        gu_next = g(u_next)
        f_next = gu_next - u_next
        dG.append(gu_next - gu)
        dF.append(f_next - f)
        if len(dF) > m:
            dG.pop(0)
            dF.pop(0)
        u, gu, f = u_next, gu_next, f_next
        res = float(np.linalg.norm(f))
        k += 1
    return u, FixedPointReport(k, res, res <= tol, fallbacks)


def fd_jacobian(F, u, theta=None, eps: float = 1e-6, max_n: int | None = None) -> SparseCoo:
    """Central-difference Jacobian ``dF/du`` stored with a dense pattern."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    u = np.asarray(u, dtype=np.float64)
    n = u.size
    limit = dense_threshold() if max_n is None else max_n
    if n > limit:
        raise ValueError(f"fd_jacobian limited to n <= {limit}, got {n}")
    call = (lambda v: F(v)) if theta is None else (lambda v: F(v, theta))
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = eps
        cols.append((np.asarray(call(u + e)) - np.asarray(call(u - e))) / (2 * eps))
    return from_dense(np.column_stack(cols) if cols else np.zeros((0, 0)), keep_zeros=True)
