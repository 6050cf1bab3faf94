"""Linear solvers: Jacobi-preconditioned CG and BiCGStab, dense LU, auto selection.

All iterative solvers start from x0 = 0 and stop when the recursively updated
residual satisfies ``||r||_2 <= max(atol, rtol * ||b||_2)``.  Breakdowns are
reported through ``SolveReport.message`` with ``converged=False`` instead of
raising, so parameter sweeps keep going.

Every solve entry point registers itself with :func:`count_solves`, which is
how callers verify backward-pass solve counts.
"""

from __future__ import annotations

import math
import os
import threading
import warnings
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ShapeError, SingularMatrixError
from .sparse import CsrMatrix, SparseCoo, spmv, to_dense

DEFAULT_DENSE_THRESHOLD = 2000
JACOBI_DEGENERATE = 1e-300
BICGSTAB_MAX_RESTARTS = 10

BACKENDS = ("cg", "bicgstab", "dense_lu")


def dense_threshold() -> int:
    """Backend crossover size; ``SPARSLA_DENSE_THRESHOLD`` overrides the default."""
    raw = os.environ.get("SPARSLA_DENSE_THRESHOLD")
    if raw is None or raw.strip() == "":
        return DEFAULT_DENSE_THRESHOLD
    value = int(raw)
    if value < 0:
        raise ValueError("SPARSLA_DENSE_THRESHOLD must be non-negative")
    return value


@dataclass(frozen=True)
class SolveOptions:
    atol: float = 1e-10
    rtol: float = 0.0
    max_iter: int = 10000
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if self.atol < 0 or self.rtol < 0:
            raise ValueError("atol and rtol must be non-negative")
        if self.atol == 0 and self.rtol == 0:
            raise ValueError("atol and rtol cannot both be zero")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")

    def threshold(self, b_norm: float) -> float:
        return max(self.atol, self.rtol * b_norm)


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual_norm: float
    converged: bool
    spmv_count: int
    backend: str
    message: str = ""
    memory_bytes: int = 0


class SolveTally:
    """Counts solve calls per backend within a :func:`count_solves` scope."""

    def __init__(self):
        self.by_backend = Counter()

    @property
    def total(self) -> int:
        return sum(self.by_backend.values())

    def __repr__(self):
        return f"SolveTally({dict(self.by_backend)})"


_scopes = threading.local()


@contextmanager
def count_solves():
    """Count linear solves issued on this thread inside the ``with`` block."""
    stack = getattr(_scopes, "stack", None)
    if stack is None:
        stack = _scopes.stack = []
    tally = SolveTally()
    stack.append(tally)
    try:
        yield tally
    finally:
        stack.remove(tally)


def _note_solve(backend):
    for tally in getattr(_scopes, "stack", ()):
        tally.by_backend[backend] += 1


def _as_csr(A) -> CsrMatrix:
    if isinstance(A, CsrMatrix):
        return A
    if isinstance(A, SparseCoo):
        return A.tocsr()
    raise TypeError(f"expected CsrMatrix or SparseCoo, got {type(A).__name__}")


def _check_system(A: CsrMatrix, b):
    b = np.asarray(b, dtype=np.float64)
    if A.shape[0] != A.shape[1]:
        raise ShapeError(f"matrix must be square, got {A.shape}")
    if b.shape != (A.shape[0],):
        raise ShapeError(f"rhs has shape {b.shape}, expected ({A.shape[0]},)")
    return b


def dot(a, b) -> float:
    """Inner product used by every Krylov recurrence (serial and distributed)."""
    return float(np.dot(a, b))


@dataclass(frozen=True)
class JacobiPreconditioner:
    inv_diag: np.ndarray

    def apply(self, r):
        return self.inv_diag * r

    @property
    def nbytes(self) -> int:
        return self.inv_diag.nbytes


def jacobi_build(A) -> JacobiPreconditioner:
    """Inverse diagonal; entries whose |a_ii| is degenerate fall back to 1."""
    A = _as_csr(A)
    if A.shape[0] != A.shape[1]:
        raise ShapeError(f"matrix must be square, got {A.shape}")
    d = A.diagonal()
    inv = np.ones_like(d)
    ok = np.abs(d) > JACOBI_DEGENERATE
    inv[ok] = 1.0 / d[ok]
    inv.setflags(write=False)
    return JacobiPreconditioner(inv)


def cg_solve(A, b, opts: SolveOptions | None = None, callback=None):
    """Preconditioned conjugate gradient for symmetric positive definite ``A``.

    SPD-ness is not checked. ``callback(k, x, r)`` runs after each iteration.
    Returns ``(x, SolveReport)``.
    """
    opts = opts or SolveOptions()
    A = _as_csr(A)
    b = _check_system(A, b)
    _note_solve("cg")
    tol = opts.threshold(math.sqrt(dot(b, b)))
    M = jacobi_build(A) if opts.preconditioner == "jacobi" else None

    x = np.zeros_like(b)
    r = b - spmv(A, x)
    nspmv = 1
    if M is None:
        z = r
        rz = dot(r, r)
        rr = rz
    else:
        z = M.apply(r)
        rz = dot(r, z)
        rr = dot(r, r)
    res = math.sqrt(rr)
    p = z.copy()
    Ap = np.zeros_like(b)
    k = 0
    message = ""
    while res > tol and k < opts.max_iter:
        Ap = spmv(A, p)
        nspmv += 1
        pAp = dot(p, Ap)
        if not pAp > 0.0 or not math.isfinite(pAp):
            message = f"breakdown at iteration {k}: p^T A p = {pAp!r} (matrix not SPD?)"
            break
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        k += 1
        if M is None:
            z = r
            rz_new = dot(r, r)
            rr = rz_new
        else:
            z = M.apply(r)
            rz_new = dot(r, z)
            rr = dot(r, r)
        res = math.sqrt(rr)
        p = z + (rz_new / rz) * p
        rz = rz_new
        if callback is not None:
            callback(k, x, r)

    converged = res <= tol and not message
    if not converged and not message:
        message = f"no convergence in {k} iterations (residual {res:.3e} > {tol:.3e})"
    vectors = 5 + (M is not None)  # x, b, r, p, Ap (+ z)
    mem = A.nbytes + vectors * b.nbytes + (M.nbytes if M is not None else 0)
    return x, SolveReport(k, res, converged, nspmv, "cg", message, mem)


def bicgstab_solve(A, b, opts: SolveOptions | None = None):
    """BiCGStab with right Jacobi preconditioning for general nonsingular ``A``.

    A rho breakdown (shadow residual orthogonal to ``r``) restarts the
    recurrence with ``rhat = r``, at most 10 times per solve.
    """
    opts = opts or SolveOptions()
    A = _as_csr(A)
    b = _check_system(A, b)
    _note_solve("bicgstab")
    bb = dot(b, b)
    tol = opts.threshold(math.sqrt(bb))
    M = jacobi_build(A) if opts.preconditioner == "jacobi" else None
    prec = (lambda v: v) if M is None else M.apply

    x = np.zeros_like(b)
    r = b - spmv(A, x)
    nspmv = 1
    rhat = r.copy()
    res = math.sqrt(dot(r, r))
    rho = alpha = omega = 1.0
    p = np.zeros_like(b)
    v = np.zeros_like(b)
    k = 0
    message = ""
    fresh = True
    restarts = 0
    while res > tol and k < opts.max_iter:
        rho_new = dot(rhat, r)
        if abs(rho_new) < 1e-30 * bb or not math.isfinite(rho_new):
            # shadow residual went orthogonal to r: restart with rhat = r
            if fresh or restarts >= BICGSTAB_MAX_RESTARTS or not math.isfinite(rho_new):
                message = f"rho breakdown at iteration {k}: rho = {rho_new!r}"
                break
            rhat = r.copy()
            restarts += 1
            fresh = True
            continue
        if fresh:
            p = r.copy()
            fresh = False
        else:
            p = r + (rho_new / rho) * (alpha / omega) * (p - omega * v)
        phat = prec(p)
        v = spmv(A, phat)
        nspmv += 1
        denom = dot(rhat, v)
        if denom == 0.0 or not math.isfinite(denom):
            message = f"breakdown at iteration {k}: rhat^T v = {denom!r} (singular matrix?)"
            break
        alpha = rho_new / denom
        s = r - alpha * v
        s_norm = math.sqrt(dot(s, s))
        if s_norm <= tol:
            x = x + alpha * phat
            r = s
            res = s_norm
            k += 1
            break
        shat = prec(s)
        t = spmv(A, shat)
        nspmv += 1
        tt = dot(t, t)
        if tt == 0.0 or not math.isfinite(tt):
            message = f"omega breakdown at iteration {k}: t^T t = {tt!r}"
            break
        omega = dot(t, s) / tt
        x = x + alpha * phat + omega * shat
        r = s - omega * t
        rho = rho_new
        k += 1
        res = math.sqrt(dot(r, r))
        if omega == 0.0:
            message = f"omega breakdown at iteration {k}: omega = 0"
            break

    converged = res <= tol and not message
    if not converged and not message:
        message = f"no convergence in {k} iterations (residual {res:.3e} > {tol:.3e})"
    vectors = 10  # x, b, r, rhat, p, v, phat, s, shat, t
    mem = A.nbytes + vectors * b.nbytes + (M.nbytes if M is not None else 0)
    return x, SolveReport(k, res, converged, nspmv, "bicgstab", message, mem)


def dense_lu_solve(A, b) -> np.ndarray:
    """Partial-pivoting LU solve of a dense system.

    Raises ``SingularMatrixError`` when a pivot is zero to working precision.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"matrix must be square, got {A.shape}")
    if b.shape != (A.shape[0],):
        raise ShapeError(f"rhs has shape {b.shape}, expected ({A.shape[0]},)")
    _note_solve("dense_lu")
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    scale = np.max(np.abs(A))
    k = int(np.argmin(pivots))
    if scale == 0.0 or pivots[k] <= n * np.finfo(float).eps * scale:
        raise SingularMatrixError(f"zero pivot at column {k}: matrix is singular to working precision")
    return scipy.linalg.lu_solve((lu, piv), b)


def _dense_solve_report(A: SparseCoo, b, opts: SolveOptions):
    D = to_dense(A)
    x = dense_lu_solve(D, b)
    res = float(np.linalg.norm(spmv(A.tocsr(), x) - b))
    tol = opts.threshold(float(np.linalg.norm(b)))
    converged = res <= tol
    message = "" if converged else f"direct solve residual {res:.3e} above tolerance {tol:.3e}"
    mem = D.nbytes + 3 * b.nbytes
    return x, SolveReport(0, res, converged, 1, "dense_lu", message, mem)


def select_backend(A: SparseCoo, threshold: int | None = None) -> str:
    """Size/symmetry rule: small -> dense_lu, symmetric -> cg, else bicgstab."""
    threshold = dense_threshold() if threshold is None else threshold
    if A.shape[0] < threshold:
        return "dense_lu"
    return "cg" if A.is_symmetric() else "bicgstab"


def solve_with(backend: str, A, b, opts: SolveOptions | None = None):
    """Run one named backend; returns ``(x, SolveReport)``."""
    opts = opts or SolveOptions()
    if backend == "cg":
        return cg_solve(A, b, opts)
    if backend == "bicgstab":
        return bicgstab_solve(A, b, opts)
    if backend == "dense_lu":
        if isinstance(A, CsrMatrix):
            A = A.to_coo()
        b = _check_system(A.tocsr(), b)
        return _dense_solve_report(A, b, opts)
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


def auto_solve(A: SparseCoo, b, opts: SolveOptions | None = None, threshold: int | None = None):
    """Solve with the backend chosen by :func:`select_backend`."""
    if isinstance(A, CsrMatrix):
        A = A.to_coo()
    if A.shape[0] != A.shape[1]:
        raise ShapeError(f"matrix must be square, got {A.shape}")
    return solve_with(select_backend(A, threshold), A, b, opts)
