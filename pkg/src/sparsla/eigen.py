"""Smallest eigenpairs of sparse symmetric matrices and their value gradients.

The eigenvalue sensitivity to a single stored entry is ``v_i * v_j``. Entries
(i, j) and (j, i) are separate parameters, so perturbing both halves of an
off-diagonal pair changes the eigenvalue by twice that amount.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEigenvalueError, ShapeError, SymmetryError
from .linear import dense_threshold, jacobi_build
from .sparse import SparseCoo, spmm, to_dense

GAP_THRESHOLD = 1e-8
DROP_NORM = 1e-12
REORTH_RATIO = 0.7


@dataclass(frozen=True, eq=False)
class EigenResult:
    lambdas: np.ndarray        # (k,) ascending
    vectors: np.ndarray        # (n, k), unit columns
    residual_norms: np.ndarray  # (k,) ||A v - lambda v||_2
    converged: np.ndarray      # (k,) bool
    iterations: int
    method: str

    @property
    def k(self) -> int:
        return self.lambdas.size

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def _fix_signs(V):
    # largest-magnitude component of each column made positive; near-ties
    # (within 1e-12 relative) go to the lowest index so rounding can't flip it
    mag = np.abs(V)
    near = mag >= mag.max(axis=0, initial=0.0) * (1.0 - 1e-12)
    idx = np.argmax(near, axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _orthonormalize(basis, candidates):
    """Modified Gram-Schmidt of ``candidates`` against ``basis`` and each other.

    A column is projected a second time when the first pass shrinks it below
    ``REORTH_RATIO`` of its input norm; columns whose final norm is below
    ``DROP_NORM`` are dropped.
    """
    Q = [basis[:, j] for j in range(basis.shape[1])]
    for j in range(candidates.shape[1]):
        w = candidates[:, j]
        nrm = np.linalg.norm(w)
        if nrm == 0.0 or not np.isfinite(nrm):
            continue
        w = w / nrm
        for _ in range(2):
            before = np.linalg.norm(w)
            for q in Q:
                w = w - np.dot(q, w) * q
            after = np.linalg.norm(w)
            if after >= REORTH_RATIO * before:
                break
        if after < DROP_NORM:
            continue
        Q.append(w / after)
    return np.column_stack(Q) if Q else np.zeros((basis.shape[0], 0))


def _rayleigh_ritz(A, S):
    AS = spmm(A, S)
    G = S.T @ AS
    G = 0.5 * (G + G.T)
    theta, C = np.linalg.eigh(G)
    return theta, C, AS


def _lobpcg(A: SparseCoo, k, tol, max_iter, seed, block=None):
    n = A.n
    csr = A.tocsr()
    M = jacobi_build(csr)
    m = block or min(n, max(2 * k, k + 4))
    rng = np.random.default_rng(seed)

    X = _orthonormalize(np.zeros((n, 0)), rng.standard_normal((n, m)))
    theta, C, AX = _rayleigh_ritz(csr, X)
    X = X @ C
    AX = AX @ C
    P = np.zeros((n, 0))
    it = 0
    while True:
        R = AX - X * theta
        res = np.linalg.norm(R, axis=0)
        conv = res[:k] <= tol
        if conv.all() or it >= max_iter:
            break
        it += 1
        # soft locking: converged wanted pairs stop contributing search directions
        active = np.r_[~conv, np.ones(m - k, dtype=bool)]
        W = M.inv_diag[:, None] * R[:, active]
        S = _orthonormalize(X, np.column_stack([W, P]) if P.size else W)
        theta_all, C, AS = _rayleigh_ritz(csr, S)
        Ck = C[:, :m]
        X_new = S @ Ck
        P = S[:, m:] @ Ck[m:, :]
        theta = theta_all[:m]
        AX = AS @ Ck
        X = X_new
        # periodic re-orthonormalization of the Ritz block keeps X^T X = I
        if it % 20 == 0:
            X = _orthonormalize(np.zeros((n, 0)), X)
            theta, C, AX = _rayleigh_ritz(csr, X)
            X, AX = X @ C, AX @ C
            P = np.zeros((n, 0))
    return theta[:k], X[:, :k], res[:k], it


def eig_smallest(A: SparseCoo, k: int, tol: float = 1e-10, max_iter: int = 1000,
                 method: str = "auto", seed: int = 0) -> EigenResult:
    """``k`` smallest eigenpairs of symmetric ``A``.

    ``method="auto"`` uses a dense decomposition below the dense threshold
    and LOBPCG (Jacobi preconditioned, seeded random start) otherwise.
    LOBPCG requires ``k <= n / 4``. Unconverged pairs are flagged in
    ``converged`` rather than raising.
    """
    if A.shape[0] != A.shape[1]:
        raise ShapeError(f"matrix must be square, got {A.shape}")
    if not A.is_symmetric(tol=1e-12):
        raise SymmetryError("eig_smallest requires a symmetric matrix")
    n = A.n
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if method == "auto":
        method = "dense" if n < dense_threshold() else "lobpcg"
    if method == "dense":
        w, V = np.linalg.eigh(to_dense(A))
        lambdas, V, iters = w[:k], V[:, :k], 0
    elif method == "lobpcg":
        if 4 * k > n:
            raise ValueError(f"LOBPCG needs k <= n/4 (k={k}, n={n})")
        lambdas, V, _, iters = _lobpcg(A, k, tol, max_iter, seed)
        V = V / np.linalg.norm(V, axis=0)
    else:
        raise ValueError(f"unknown method {method!r}")
    V = _fix_signs(V)
    R = spmm(A.tocsr(), V) - V * lambdas
    res = np.linalg.norm(R, axis=0)
    converged = res <= tol if method == "lobpcg" else np.ones(k, dtype=bool)
    for a in (lambdas, V, res, converged):
        a.setflags(write=False)
    return EigenResult(np.asarray(lambdas), V, res, converged, iters, method)


def eig_backward(result: EigenResult, A_pattern: SparseCoo, grad_lambdas) -> np.ndarray:
    """Gradient of ``sum_m g_m * lambda_m`` w.r.t. each stored value of ``A``.

    ``grad[(i, j)] = sum_m g_m v_m[i] v_m[j]``; O(k * nnz), no linear solves.
    """
    g = np.asarray(grad_lambdas, dtype=np.float64)
    if g.shape != (result.k,):
        raise ShapeError(f"grad_lambdas has shape {g.shape}, expected ({result.k},)")
    if A_pattern.n != result.vectors.shape[0]:
        raise ShapeError("pattern size does not match eigenvectors")
    if not result.all_converged:
        bad = np.flatnonzero(~result.converged).tolist()
        raise ValueError(f"eigenpairs {bad} did not converge; gradient undefined")
    gaps = np.diff(result.lambdas)
    if gaps.size and gaps.min() <= GAP_THRESHOLD:
        m = int(np.argmin(gaps))
        raise DegenerateEigenvalueError(
            f"eigenvalues {m} and {m + 1} differ by {gaps[m]:.3e} <= {GAP_THRESHOLD:g}"
        )
    V = result.vectors
    return (V[A_pattern.rows] * V[A_pattern.cols]) @ g
