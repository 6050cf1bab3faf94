"""Adjoint-vs-finite-difference experiments for linear, eigen and Newton solves.

Each experiment returns a :class:`GradcheckRow` with the worst relative error
over a seeded sample of parameters and the solve counts of its forward and
backward passes.  Finite differences always re-solve from scratch with an
independent high-accuracy method.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .adjoint import gradcheck, solve_backward, solve_forward
from .eigen import eig_backward, eig_smallest
from .linear import SolveOptions, count_solves, dense_lu_solve
from .nonlinear import ResidualSystem, newton_backward, newton_solve
from .problems import poisson_grid
from .sparse import SparseCoo, to_dense

DEFAULT_EPS = 1e-5
DEFAULT_SAMPLES = 16


@dataclass
class GradcheckRow:
    operation: str
    rel_error: float
    forward: str
    backward: str
    forward_solves: int
    backward_solves: int
    checked: int


def _sample(rng, size, count):
    if count >= size:
        return np.arange(size)
    return np.sort(rng.choice(size, count, replace=False))


def linear_grid(n: int):
    """Most nearly square ``nx * ny = n`` factorization (nx >= ny)."""
    ny = int(np.floor(np.sqrt(n)))
    while n % ny:
        ny -= 1
    return n // ny, ny


def check_linear(n: int = 1000, eps: float = DEFAULT_EPS, samples: int = DEFAULT_SAMPLES, seed: int = 0,
                 A: SparseCoo | None = None) -> GradcheckRow:
    """``L = w . x`` with ``A x = b``; checks dL/db and dL/dA on stored entries."""
    rng = np.random.default_rng(seed)
    if A is None:
        A = poisson_grid(*linear_grid(n))
    n = A.n
    b = rng.uniform(0.5, 1.5, n)
    w = rng.standard_normal(n)
    with count_solves() as fwd:
        x, ctx, _ = solve_forward(A, b)
    with count_solves() as bwd:
        grads = solve_backward(ctx, w)

    D = to_dense(A)

    def loss_b(bb):
        return w @ dense_lu_solve(D, bb)

    def loss_vals(v):
        return w @ dense_lu_solve(to_dense(A.with_values(v)), b)

    err_b = gradcheck(loss_b, b, grads.grad_b, eps, _sample(rng, n, samples))
    err_a = gradcheck(loss_vals, A.vals, grads.grad_vals, eps, _sample(rng, A.nnz, samples))
    return GradcheckRow(f"linear solve (n={n})", max(err_b, err_a),
                        f"{fwd.total} solve", f"{bwd.total} solve", fwd.total, bwd.total,
                        min(samples, n) + min(samples, A.nnz))


def _smallest_eigenvalues(A: SparseCoo, k: int, vals=None) -> np.ndarray:
    """k smallest eigenvalues of a (possibly slightly nonsymmetric) matrix."""
    vals = A.vals if vals is None else vals
    if A.n <= 300:
        w = np.linalg.eigvals(to_dense(A.with_values(vals)))
    else:
        M = scipy.sparse.csc_matrix((vals, (A.rows, A.cols)), shape=A.shape)
        w = scipy.sparse.linalg.eigs(M, k=k, sigma=0.0, which="LM", tol=0)[0]
    return np.sort(w.real)[:k]


def check_eigen(k: int = 6, grid=(64, 16), eps: float = DEFAULT_EPS, samples: int = DEFAULT_SAMPLES,
                seed: int = 0, A: SparseCoo | None = None, method: str = "lobpcg") -> GradcheckRow:
    """``L = sum_m g_m lambda_m`` over the k smallest eigenvalues.

    The default grid is rectangular: square Poisson grids have repeated
    eigenvalues, where individual eigenvalue gradients do not exist.
    Finite differences perturb a single stored entry at a time.
    """
    rng = np.random.default_rng(seed)
    if A is None:
        A = poisson_grid(*grid)
    g = rng.standard_normal(k)
    result = eig_smallest(A, k, tol=1e-10, method=method, seed=seed)
    with count_solves() as bwd:
        grad = eig_backward(result, A, g)

    def loss(v):
        return g @ _smallest_eigenvalues(A, k, v)

    err = gradcheck(loss, A.vals, grad, eps, _sample(rng, A.nnz, samples))
    return GradcheckRow(f"eigenvalue (k={k}, n={A.n})", err, result.method.upper(),
                        "1 outer product", 0, bwd.total, min(samples, A.nnz))


def diffusion_system(N: int = 16, scale: float = 0.5) -> ResidualSystem:
    """``F(u, theta) = A u + theta * u**3 - scale`` on an N x N Poisson grid.

    ``theta`` is a per-node reaction coefficient; ``dF/dtheta = diag(u**3)``.
    """
    A = poisson_grid(N, N)
    csr = A.tocsr()
    n = A.n
    idx = np.arange(n)
    rows = np.concatenate([A.rows, idx])
    cols = np.concatenate([A.cols, idx])
    b = np.full(n, scale)

    def residual(u, theta):
        return csr @ u + theta * u ** 3 - b

    def jacobian(u, theta):
        return SparseCoo(rows, cols, np.concatenate([A.vals, 3.0 * theta * u ** 2]), (n, n))

    def vjp_theta(u, theta, lam):
        return lam * u ** 3

    return ResidualSystem(residual, jacobian, vjp_theta)


def check_nonlinear(N: int = 16, scale: float = 0.5, tol: float = 1e-9, eps: float = DEFAULT_EPS,
                    samples: int = DEFAULT_SAMPLES, seed: int = 0) -> GradcheckRow:
    """Reaction-diffusion Newton solve; default settings take 5 Newton steps."""
    rng = np.random.default_rng(seed)
    sys = diffusion_system(N, scale)
    n = N * N
    theta = np.ones(n)
    w = rng.standard_normal(n)
    with count_solves() as fwd:
        u, ctx, report = newton_solve(sys, np.zeros(n), theta, tol=tol)
    if not report.converged:
        raise RuntimeError(f"Newton did not converge: ||F|| = {report.final_residual_norm:.3e}")
    grad = newton_backward(ctx, sys, w, report)

    def loss(t):
        uu, _, rep = newton_solve(sys, u.copy(), t, tol=1e-13, max_iter=20)
        return w @ uu

    err = gradcheck(loss, theta, grad, eps, _sample(rng, n, samples))
    return GradcheckRow(f"nonlinear ({report.newton_iterations} Newton)", err,
                        f"{fwd.total} solves", f"{report.linear_solves_backward} solve",
                        fwd.total, report.linear_solves_backward, min(samples, n))


def run_all(n: int = 1000, k: int = 6, eps: float = DEFAULT_EPS, samples: int = DEFAULT_SAMPLES,
            seed: int = 0) -> list[GradcheckRow]:
    return [
        check_linear(n, eps, samples, seed),
        check_eigen(k, eps=eps, samples=samples, seed=seed),
        check_nonlinear(eps=eps, samples=samples, seed=seed),
    ]
