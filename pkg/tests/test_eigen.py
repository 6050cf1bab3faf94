import numpy as np
import pytest
import scipy.linalg

from sparsla import (count_solves, eig_backward, eig_smallest, from_dense, gradcheck, poisson_grid, random_spd,
                     to_dense)
from sparsla.eigen import _fix_signs
from sparsla.errors import DegenerateEigenvalueError, ShapeError, SymmetryError
from sparsla.verification import _smallest_eigenvalues


def check_invariants(res, A, tol):
    V = res.vectors
    assert np.all(np.abs(np.linalg.norm(V, axis=0) - 1.0) <= 1e-10)
    G = V.T @ V - np.eye(V.shape[1])
    assert np.max(np.abs(G)) <= 1e-8
    R = to_dense(A) @ V - V * res.lambdas
    assert np.all(np.linalg.norm(R, axis=0)[res.converged] <= max(tol, 1e-10) * 1.0001)
    idx = np.argmax(np.abs(V) >= np.abs(V).max(axis=0) * (1 - 1e-12), axis=0)
    assert np.all(V[idx, np.arange(V.shape[1])] > 0)


def test_diagonal():
    A = from_dense(np.diag([1.0, 2.0, 3.0, 4.0]))
    res = eig_smallest(A, 2)
    assert np.allclose(res.lambdas, [1, 2], rtol=0, atol=1e-14)
    assert np.allclose(res.vectors, np.eye(4)[:, :2], rtol=0, atol=1e-14)


def test_two_by_two():
    A = from_dense(np.array([[2.0, 1.0], [1.0, 2.0]]))
    res = eig_smallest(A, 1)
    assert res.lambdas[0] == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(res.vectors[:, 0], np.array([1.0, -1.0]) / np.sqrt(2), rtol=0, atol=1e-14)


@pytest.mark.parametrize("grid", [(16, 16), (12, 10)])
def test_lobpcg_poisson_matches_dense(grid):
    A = poisson_grid(*grid)
    res = eig_smallest(A, 6, tol=1e-10, method="lobpcg")
    assert res.method == "lobpcg" and res.all_converged
    ref = scipy.linalg.eigh(to_dense(A), eigvals_only=True)[:6]
    assert np.max(np.abs(res.lambdas - ref)) <= 1e-8
    check_invariants(res, A, 1e-10)


def test_lobpcg_random_matches_dense():
    A = random_spd(200, density=0.03, seed=11)
    res = eig_smallest(A, 5, tol=1e-10, method="lobpcg")
    ref = np.linalg.eigvalsh(to_dense(A))[:5]
    assert res.all_converged
    assert np.max(np.abs(res.lambdas - ref)) <= 1e-8
    check_invariants(res, A, 1e-10)


def test_lobpcg_deterministic_with_seed():
    A = poisson_grid(10, 9)
    a = eig_smallest(A, 4, method="lobpcg", seed=3)
    b = eig_smallest(A, 4, method="lobpcg", seed=3)
    assert np.array_equal(a.lambdas, b.lambdas) and np.array_equal(a.vectors, b.vectors)


def test_lobpcg_k_limit():
    with pytest.raises(ValueError, match="n/4"):
        eig_smallest(poisson_grid(3, 3), 3, method="lobpcg")


def test_nonconverged_flags():
    res = eig_smallest(poisson_grid(20, 20), 4, tol=1e-14, max_iter=3, method="lobpcg")
    assert not res.all_converged
    with pytest.raises(ValueError, match="did not converge"):
        eig_backward(res, poisson_grid(20, 20), np.ones(4))


def test_trace_consistency(rng):
    D = rng.standard_normal((7, 7))
    A = from_dense(D + D.T)
    res = eig_smallest(A, 7, method="dense")
    assert abs(res.lambdas.sum() - np.trace(D + D.T)) <= 1e-9
    assert np.all(np.diff(res.lambdas) > 0)


def test_rejects_nonsymmetric():
    with pytest.raises(SymmetryError):
        eig_smallest(from_dense(np.array([[1.0, 2.0], [0.0, 1.0]])), 1)
    with pytest.raises(ValueError):
        eig_smallest(from_dense(np.eye(3)), 0)


def test_backward_two_by_two_fd():
    A = from_dense(np.array([[2.0, 1.0], [1.0, 2.0]]))
    res = eig_smallest(A, 1)
    with count_solves() as t:
        g = eig_backward(res, A, [1.0])
    assert t.total == 0
    assert np.allclose(g, [0.5, -0.5, -0.5, 0.5], rtol=0, atol=1e-12)
    # one stored entry perturbed at a time (the matrix goes nonsymmetric)
    fd_err = gradcheck(lambda v: np.sort(np.linalg.eigvals(to_dense(A.with_values(v))).real)[0], A.vals, g)
    assert fd_err < 1e-6


def test_backward_zero_grad():
    A = poisson_grid(6, 5)
    res = eig_smallest(A, 3)
    assert not eig_backward(res, A, np.zeros(3)).any()


def test_backward_degenerate():
    A = poisson_grid(6, 6)  # square grid: lambda_2 == lambda_3
    res = eig_smallest(A, 3)
    with pytest.raises(DegenerateEigenvalueError):
        eig_backward(res, A, np.ones(3))


def test_backward_shape_errors():
    A = poisson_grid(5, 4)
    res = eig_smallest(A, 2)
    with pytest.raises(ShapeError):
        eig_backward(res, A, np.ones(3))
    with pytest.raises(ShapeError):
        eig_backward(res, poisson_grid(3, 3), np.ones(2))


@pytest.mark.parametrize("seed", range(3))
def test_backward_random_symmetric_fd(seed):
    rng = np.random.default_rng(seed)
    n = 40
    M = rng.standard_normal((n, n)) * (rng.random((n, n)) < 0.15)
    A = from_dense(M + M.T + np.diag(rng.uniform(0, 10, n)), keep_zeros=False)
    k = 3
    res = eig_smallest(A, k, method="dense")
    g = rng.standard_normal(k)
    grad = eig_backward(res, A, g)
    loss = lambda v: g @ _smallest_eigenvalues(A, k, v)  # noqa: E731
    # relative check where central FD can resolve the gradient: its roundoff
    # floor is ~|lambda| * 1e-16 / eps ~ 1e-10 absolute
    big = np.flatnonzero(np.abs(grad) >= 1e-3 * np.abs(grad).max())
    assert gradcheck(loss, A.vals, grad, 1e-5, rng.choice(big, 25, replace=False)) < 1e-5
    for j in rng.choice(A.nnz, 25, replace=False):
        p, m = A.vals.copy(), A.vals.copy()
        p[j] += 1e-5
        m[j] -= 1e-5
        assert abs((loss(p) - loss(m)) / 2e-5 - grad[j]) <= 1e-8


def test_fix_signs_tie_goes_to_first():
    V = np.array([[0.7071067811865475], [-0.7071067811865476]])
    assert _fix_signs(V)[0, 0] > 0
