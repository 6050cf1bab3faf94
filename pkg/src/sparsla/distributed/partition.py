"""Node partitioners and the owned/halo plan they induce on a matrix pattern."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..sparse import SparseCoo


def partition_contiguous(n: int, P: int) -> np.ndarray:
    """Rank ``p`` owns ``[p * ceil(n/P), min((p + 1) * ceil(n/P), n))``."""
    if not 1 <= P <= n:
        raise ValueError(f"need 1 <= P <= n, got P={P}, n={n}")
    block = -(-n // P)
    return (np.arange(n) // block).astype(np.int64)


def partition_rcb(coords, P: int) -> np.ndarray:
    """Recursive coordinate bisection into ``P`` (a power of two) parts.

    Each level splits the current point set at its median along the axis of
    largest extent (ties go to the lower axis); equal coordinates are ordered
    by node index. The lower half gets ``floor(m/2)`` points.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2:
        raise ValueError("coords must have shape (n, dim)")
    if P < 1 or P & (P - 1):
        raise ValueError(f"RCB needs a power-of-two part count, got {P}")
    n = coords.shape[0]
    if P > n:
        raise ValueError(f"cannot split {n} points into {P} parts")
    part = np.zeros(n, dtype=np.int64)

    def split(nodes, first, count):
        if count == 1:
            part[nodes] = first
            return
        pts = coords[nodes]
        axis = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
        order = np.lexsort((nodes, pts[:, axis]))
        half = nodes.size // 2
        split(nodes[order[:half]], first, count // 2)
        split(nodes[order[half:]], first + count // 2, count // 2)

    split(np.arange(n), 0, P)
    return part


def _symmetric_edges(A: SparseCoo):
    off = A.rows != A.cols
    i = np.concatenate([A.rows[off], A.cols[off]])
    j = np.concatenate([A.cols[off], A.rows[off]])
    return i, j


@dataclass(frozen=True, eq=False)
class PartitionPlan:
    num_parts: int
    part_of: np.ndarray
    owned: tuple          # per rank, ascending global indices
    halo: tuple           # per rank, ascending global indices
    neighbors: tuple      # per rank, ascending rank ids

    @property
    def n(self) -> int:
        return self.part_of.size


def make_plan(A: SparseCoo, part_of) -> PartitionPlan:
    """Owned and halo sets for every rank.

    ``h`` is in rank p's halo iff p does not own it and some owned ``i`` has
    a stored entry (i, h) or (h, i).
    """
    part_of = np.asarray(part_of, dtype=np.int64)
    if part_of.shape != (A.n,):
        raise ValueError(f"part_of must have length {A.n}")
    if part_of.size and part_of.min() < 0:
        raise ValueError("negative rank in part_of")
    P = int(part_of.max()) + 1 if part_of.size else 1
    owned = tuple(np.flatnonzero(part_of == p) for p in range(P))
    i, j = _symmetric_edges(A)
    cross = part_of[i] != part_of[j]
    pi, hj = part_of[i[cross]], j[cross]
    halo = tuple(np.unique(hj[pi == p]) for p in range(P))
    neighbors = tuple(np.unique(part_of[h]) for h in halo)
    return PartitionPlan(P, part_of, owned, halo, neighbors)
