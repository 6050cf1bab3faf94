"""Matrix Market coordinate-format reader and writer (real/integer fields)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import IndexBoundsError, MatrixMarketError
from .sparse import SparseCoo

_SYMMETRIES = ("general", "symmetric")
_FIELDS = ("real", "integer")


def read_matrix_market(path) -> SparseCoo:
    """Read a ``.mtx`` coordinate file into a canonical ``SparseCoo``.

    Symmetric files are expanded to full storage. Indices are converted from
    1-based to 0-based here.
    """
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError("empty file", 1)

    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("missing '%%MatrixMarket' banner", 1)
    obj, fmt, fld, sym = (h.lower() for h in header[1:])
    if obj != "matrix":
        raise MatrixMarketError(f"unsupported object {obj!r}", 1)
    if fmt != "coordinate":
        raise MatrixMarketError(f"non-coordinate format {fmt!r}", 1)
    if fld not in _FIELDS:
        raise MatrixMarketError(f"unsupported field {fld!r}", 1)
    if sym not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry {sym!r}", 1)

    lineno = 1
    size = None
    for lineno in range(2, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if not text or text.startswith("%"):
            continue
        size = text.split()
        break
    if size is None:
        raise MatrixMarketError("missing size line", lineno)
    try:
        nrows, ncols, nnz = (int(t) for t in size)
    except ValueError:
        raise MatrixMarketError(f"bad size line {' '.join(size)!r}", lineno) from None

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    k = 0
    for lineno in range(lineno + 1, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if len(parts) != 3:
            raise MatrixMarketError(f"expected 'row col value', got {text!r}", lineno)
        if k >= nnz:
            raise MatrixMarketError(f"more than the declared {nnz} entries", lineno)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise MatrixMarketError(f"cannot parse entry {text!r}", lineno) from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixMarketError(f"index ({i}, {j}) outside {nrows}x{ncols}", lineno)
        rows[k], cols[k], vals[k] = i - 1, j - 1, v
        k += 1
    if k != nnz:
        raise MatrixMarketError(f"declared {nnz} entries, found {k}", len(lines))

    if sym == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    try:
        return SparseCoo(rows, cols, vals, (nrows, ncols))
    except IndexBoundsError as exc:  # pragma: no cover - guarded above
        raise MatrixMarketError(str(exc)) from exc


def write_matrix_market(A: SparseCoo, path, symmetric: bool = False, comment: str | None = None):
    """Write ``A`` in coordinate/real format with round-trip precision.

    With ``symmetric=True`` only the lower triangle is written; ``A`` must
    then be exactly symmetric.
    """
    rows, cols, vals = A.rows, A.cols, A.vals
    if symmetric:
        if not A.is_symmetric(tol=0.0):
            raise ValueError("matrix is not exactly symmetric")
        keep = rows >= cols
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    out = [f"%%MatrixMarket matrix coordinate real {'symmetric' if symmetric else 'general'}"]
    if comment:
        out.extend(f"% {line}" for line in comment.splitlines())
    out.append(f"{A.shape[0]} {A.shape[1]} {vals.size}")
    out.extend(f"{i + 1} {j + 1} {v!r}" for i, j, v in zip(rows.tolist(), cols.tolist(), vals.tolist()))
    Path(path).write_text("\n".join(out) + "\n", encoding="ascii")
