"""Test-problem generators: 2-D Poisson 5-point stencil and random SPD systems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import SparseCoo


@dataclass(frozen=True, eq=False)
class PoissonProblem:
    N: int
    matrix: SparseCoo
    rhs: np.ndarray
    coords: np.ndarray  # (n, 2) grid points (x, y), node = y * nx + x

    @property
    def n(self) -> int:
        return self.matrix.n


def poisson_grid(nx: int, ny: int) -> SparseCoo:
    """5-point Laplacian on an ``nx`` x ``ny`` interior grid, Dirichlet boundary eliminated.

    Node ``(x, y)`` maps to index ``y * nx + x``.
    """
    if nx < 1 or ny < 1:
        raise ValueError("grid dimensions must be positive")
    idx = np.arange(nx * ny).reshape(ny, nx)
    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [np.full(nx * ny, 4.0)]
    for a, b in ((idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :])):
        a, b = a.ravel(), b.ravel()
        rows += [a, b]
        cols += [b, a]
        vals += [np.full(a.size, -1.0), np.full(a.size, -1.0)]
    return SparseCoo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (nx * ny, nx * ny))


def grid_coords(nx: int, ny: int) -> np.ndarray:
    y, x = np.divmod(np.arange(nx * ny), nx)
    return np.column_stack([x, y]).astype(np.float64)


def poisson2d(N: int, rhs: str = "ones", seed: int = 0) -> PoissonProblem:
    """N x N Poisson problem.

    ``rhs="ones"`` gives b = 1; ``rhs="manufactured"`` draws x* ~ U(-1, 1)
    and sets b = A x*.
    """
    if N < 2:
        raise ValueError(f"grid side must be at least 2, got {N}")
    A = poisson_grid(N, N)
    if rhs == "ones":
        b = np.ones(N * N)
    elif rhs == "manufactured":
        x_star = np.random.default_rng(seed).uniform(-1.0, 1.0, N * N)
        b = A.tocsr() @ x_star
    else:
        raise ValueError(f"unknown rhs kind {rhs!r}")
    return PoissonProblem(N, A, b, grid_coords(N, N))


def random_spd(n: int, density: float = 0.05, seed: int = 0, shift: float = 1.0) -> SparseCoo:
    """Sparse symmetric, strictly diagonally dominant matrix (hence SPD)."""
    rng = np.random.default_rng(seed)
    m = max(1, int(density * n * n / 2))
    i = rng.integers(0, n, m)
    j = rng.integers(0, n, m)
    off = i != j
    i, j = i[off], j[off]
    v = rng.uniform(-1.0, 1.0, i.size)
    rows = np.concatenate([i, j])
    cols = np.concatenate([j, i])
    vals = np.concatenate([v, v])
    absrow = np.bincount(rows, weights=np.abs(vals), minlength=n)
    diag = absrow + shift + rng.uniform(0.0, 1.0, n)
    idx = np.arange(n)
    return SparseCoo(np.concatenate([rows, idx]), np.concatenate([cols, idx]),
                     np.concatenate([vals, diag]), (n, n))
