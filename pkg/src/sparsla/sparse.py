"""Sparse matrix containers and kernels.

``SparseCoo`` is the canonical, differentiable representation: entries are
sorted by (row, col), duplicates are summed, and explicit zeros are kept so
the stored pattern stays fixed while values change.  ``CsrMatrix`` is the
compressed-row form every matrix-vector kernel runs on.

SpMV accumulates each row strictly left to right in stored column order.
Distributed SpMV relies on this to reproduce the serial result bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DenseLimitError, IndexBoundsError, ShapeError

#: Default upper bound on ``nrows * ncols`` for dense conversion.
DENSE_MAX_ENTRIES = 1 << 26


def _readonly(a):
    a.setflags(write=False)
    return a


def _check_shape(shape):
    if len(shape) != 2:
        raise ShapeError(f"shape must have two entries, got {shape!r}")
    nrows, ncols = (int(s) for s in shape)
    if nrows < 0 or ncols < 0:
        raise ShapeError(f"negative dimension in shape {shape!r}")
    return nrows, ncols


@dataclass(frozen=True, eq=False)
class SparseCoo:
    """Coordinate-format sparse matrix in canonical form.

    Construction always canonicalizes, so rebuilding from an existing
    matrix's own arrays reproduces it exactly.
    """

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    shape: tuple[int, int]

    def __post_init__(self):
        rows = np.asarray(self.rows).ravel()
        cols = np.asarray(self.cols).ravel()
        vals = np.asarray(self.vals, dtype=np.float64).ravel()
        if not (rows.size == cols.size == vals.size):
            raise ShapeError(
                f"rows, cols, vals lengths differ: {rows.size}, {cols.size}, {vals.size}"
            )
        if rows.size and not (np.issubdtype(rows.dtype, np.integer) and np.issubdtype(cols.dtype, np.integer)):
            if not (np.all(rows == np.floor(rows)) and np.all(cols == np.floor(cols))):
                raise ShapeError("row and column indices must be integers")
        rows = rows.astype(np.int64)
        cols = cols.astype(np.int64)
        nrows, ncols = _check_shape(self.shape)
        if rows.size:
            bad = (rows < 0) | (rows >= nrows) | (cols < 0) | (cols >= ncols)
            if bad.any():
                k = int(np.flatnonzero(bad)[0])
                raise IndexBoundsError(
                    f"entry {k} at ({rows[k]}, {cols[k]}) is outside shape ({nrows}, {ncols})"
                )
        rows, cols, vals = _canonicalize(rows, cols, vals, ncols)
        object.__setattr__(self, "rows", _readonly(rows))
        object.__setattr__(self, "cols", _readonly(cols))
        object.__setattr__(self, "vals", _readonly(vals))
        object.__setattr__(self, "shape", (nrows, ncols))

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    @property
    def n(self) -> int:
        """Row count; the unknown count for square systems."""
        return self.shape[0]

    def with_values(self, vals) -> "SparseCoo":
        """Same pattern, new values (one per stored entry)."""
        vals = np.asarray(vals, dtype=np.float64)
        if vals.shape != self.vals.shape:
            raise ShapeError(f"expected {self.nnz} values, got {vals.shape}")
        return SparseCoo(self.rows, self.cols, vals, self.shape)

    def transpose(self) -> "SparseCoo":
        return SparseCoo(self.cols, self.rows, self.vals, (self.shape[1], self.shape[0]))

    def is_structurally_symmetric(self) -> bool:
        if self.shape[0] != self.shape[1]:
            return False
        t = self.transpose()
        return bool(np.array_equal(t.rows, self.rows) and np.array_equal(t.cols, self.cols))

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        """Pattern and values symmetric, values to ``tol`` relative to max |a_ij|."""
        if not self.is_structurally_symmetric():
            return False
        t = self.transpose()
        scale = float(np.max(np.abs(self.vals))) if self.nnz else 0.0
        return bool(np.all(np.abs(t.vals - self.vals) <= tol * max(scale, 1.0)))

    def entry_index(self, i: int, j: int) -> int:
        """Position of stored entry (i, j) in the value array."""
        lo = np.searchsorted(self.rows, i, side="left")
        hi = np.searchsorted(self.rows, i, side="right")
        k = lo + np.searchsorted(self.cols[lo:hi], j)
        if k >= hi or self.cols[k] != j:
            raise KeyError(f"({i}, {j}) is not a stored entry")
        return int(k)

    @cached_property
    def _csr(self) -> "CsrMatrix":
        return coo_to_csr(self)

    def tocsr(self) -> "CsrMatrix":
        """Cached CSR view of this matrix."""
        return self._csr

    @property
    def nbytes(self) -> int:
        return self.rows.nbytes + self.cols.nbytes + self.vals.nbytes


def _canonicalize(rows, cols, vals, ncols):
    if rows.size == 0:
        return rows.copy(), cols.copy(), vals.copy()
    key = rows * max(ncols, 1) + cols
    if np.all(key[1:] > key[:-1]):
        return rows.copy(), cols.copy(), vals.copy()
    order = np.argsort(key, kind="stable")
    key = key[order]
    rows, cols, vals = rows[order], cols[order], vals[order]
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    if starts.size == key.size:
        return rows, cols, vals
    return rows[starts], cols[starts], np.add.reduceat(vals, starts)


def coo_new(rows, cols, vals, shape) -> SparseCoo:
    """Build a canonical COO matrix; duplicate (i, j) entries are summed."""
    return SparseCoo(rows, cols, vals, shape)


def coo_identity(n: int) -> SparseCoo:
    idx = np.arange(n)
    return SparseCoo(idx, idx, np.ones(n), (n, n))


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    row_ptr: np.ndarray
    col_idx: np.ndarray
    vals: np.ndarray
    shape: tuple[int, int]
    _plan: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        row_ptr = np.asarray(self.row_ptr, dtype=np.int64)
        col_idx = np.asarray(self.col_idx, dtype=np.int64)
        vals = np.asarray(self.vals, dtype=np.float64)
        nrows, ncols = _check_shape(self.shape)
        if row_ptr.size != nrows + 1 or row_ptr[0] != 0 or row_ptr[-1] != vals.size:
            raise ShapeError("row_ptr must have nrows + 1 entries from 0 to nnz")
        if col_idx.size != vals.size:
            raise ShapeError("col_idx and vals lengths differ")
        if np.any(np.diff(row_ptr) < 0):
            raise ShapeError("row_ptr must be non-decreasing")
        object.__setattr__(self, "row_ptr", _readonly(row_ptr))
        object.__setattr__(self, "col_idx", _readonly(col_idx))
        object.__setattr__(self, "vals", _readonly(vals))
        object.__setattr__(self, "shape", (nrows, ncols))
        object.__setattr__(self, "_plan", _slot_plan(row_ptr))

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    @cached_property
    def row_of_entry(self) -> np.ndarray:
        n = self.shape[0]
        return _readonly(np.repeat(np.arange(n, dtype=np.int64), np.diff(self.row_ptr)))

    def diagonal(self) -> np.ndarray:
        n = min(self.shape)
        d = np.zeros(n)
        rows = self.row_of_entry
        on_diag = (rows == self.col_idx) & (rows < n)
        d[rows[on_diag]] = self.vals[on_diag]
        return d

    def to_coo(self) -> SparseCoo:
        return SparseCoo(self.row_of_entry, self.col_idx, self.vals, self.shape)

    @property
    def nbytes(self) -> int:
        """Bytes held by the index/value arrays and the SpMV schedule."""
        order, starts, counts = self._plan
        return (self.row_ptr.nbytes + self.col_idx.nbytes + self.vals.nbytes
                + order.nbytes + starts.nbytes + counts.nbytes)

    def __matmul__(self, x):
        return spmv(self, x)


def _slot_plan(row_ptr):
    # Rows ordered by decreasing length; slot k touches the first counts[k]
    # of them, each at entry starts[r] + k.
    lengths = np.diff(row_ptr)
    if lengths.size == 0 or lengths.max(initial=0) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    order = np.argsort(-lengths, kind="stable")
    hist = np.bincount(lengths)
    counts = lengths.size - np.cumsum(hist)[:-1]
    return order, row_ptr[order], counts.astype(np.int64)


def csr_rows_matvec(row_ptr, col_idx, vals, x, plan=None):
    """Row-ordered product of raw CSR arrays with ``x``.

    Row ``i`` is accumulated as ``((0 + a_0 x_0) + a_1 x_1) + ...`` in stored
    order. Exposed so partition-local blocks share the exact serial kernel.
    """
    order, starts, counts = _slot_plan(row_ptr) if plan is None else plan
    y = np.zeros((row_ptr.size - 1,) + x.shape[1:])
    block = x.ndim == 2
    for k, c in enumerate(counts):
        rows = order[:c]
        idx = starts[:c] + k
        a = vals[idx]
        y[rows] += (a[:, None] if block else a) * x[col_idx[idx]]
    return y


def spmv(A: CsrMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.shape[1],):
        raise ShapeError(f"spmv: matrix has {A.shape[1]} columns, vector has shape {x.shape}")
    return csr_rows_matvec(A.row_ptr, A.col_idx, A.vals, x, A._plan)


def spmm(A: CsrMatrix, X) -> np.ndarray:
    """``A @ X`` for a dense block ``X`` of shape (ncols, m), column-wise like spmv."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != A.shape[1]:
        raise ShapeError(f"spmm: matrix has {A.shape[1]} columns, block has shape {X.shape}")
    return csr_rows_matvec(A.row_ptr, A.col_idx, A.vals, X, A._plan)


def spmv_transpose(A: CsrMatrix, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (A.shape[0],):
        raise ShapeError(f"spmv_transpose: matrix has {A.shape[0]} rows, vector has shape {y.shape}")
    # bincount accumulates each column in ascending row order
    return np.bincount(A.col_idx, weights=A.vals * y[A.row_of_entry], minlength=A.shape[1]).astype(np.float64)


def coo_to_csr(A: SparseCoo) -> CsrMatrix:
    counts = np.bincount(A.rows, minlength=A.shape[0])
    row_ptr = np.zeros(A.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    return CsrMatrix(row_ptr, A.cols.copy(), A.vals.copy(), A.shape)


def to_dense(A, max_entries: int = DENSE_MAX_ENTRIES) -> np.ndarray:
    """Dense ndarray copy of a ``SparseCoo`` or ``CsrMatrix``."""
    nrows, ncols = A.shape
    if nrows * ncols > max_entries:
        raise DenseLimitError(
            f"dense conversion of {nrows}x{ncols} exceeds cap of {max_entries} entries"
        )
    if isinstance(A, CsrMatrix):
        A = A.to_coo()
    D = np.zeros((nrows, ncols))
    D[A.rows, A.cols] = A.vals
    return D


def from_dense(D, keep_zeros: bool = False) -> SparseCoo:
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2:
        raise ShapeError("from_dense expects a 2-D array")
    if keep_zeros:
        rows, cols = np.indices(D.shape)
        return SparseCoo(rows.ravel(), cols.ravel(), D.ravel(), D.shape)
    rows, cols = np.nonzero(D)
    return SparseCoo(rows, cols, D[rows, cols], D.shape)
