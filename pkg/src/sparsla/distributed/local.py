"""Per-rank matrix blocks, halo exchange, and distributed SpMV."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError, TransportError
from ..sparse import SparseCoo, _slot_plan, csr_rows_matvec
from .partition import _symmetric_edges
from .transport import Transport


@dataclass(frozen=True, eq=False)
class HaloMap:
    """Per-neighbor index lists, each sorted by global index (wire order).

    ``send_idx[q]`` are local positions of owned values rank q needs;
    ``recv_idx[q]`` are local positions (in the halo region) q fills.
    """

    n_owned: int
    neighbors: tuple
    send_idx: dict
    recv_idx: dict

    @property
    def is_empty(self) -> bool:
        return not self.neighbors


@dataclass(frozen=True, eq=False)
class LocalPartition:
    """Owned rows of ``A`` with columns renumbered into ``[owned | halo]``.

    Within each row the entries keep ascending *global* column order so the
    local product accumulates exactly like the serial kernel.
    """

    rank: int
    n_global: int
    owned: np.ndarray         # global ids, ascending
    halo: np.ndarray          # global ids, ascending
    row_ptr: np.ndarray
    col_idx: np.ndarray       # local ids
    vals: np.ndarray
    entry_index: np.ndarray   # position of each local entry in the global COO
    halo_map: HaloMap
    structurally_symmetric: bool
    # A^T restricted to owned rows, same local numbering (symmetric patterns only)
    t_row_ptr: np.ndarray | None = None
    t_col_idx: np.ndarray | None = None
    t_vals: np.ndarray | None = None

    @property
    def n_owned(self) -> int:
        return self.owned.size

    @property
    def n_halo(self) -> int:
        return self.halo.size

    @property
    def local_to_global(self) -> np.ndarray:
        return np.concatenate([self.owned, self.halo])

    def to_local(self, gidx) -> np.ndarray:
        """Local positions of global ids; -1 where the id is not local."""
        return _to_local(self.owned, self.halo, gidx)

    @property
    def nbytes(self) -> int:
        arrays = [self.owned, self.halo, self.row_ptr, self.col_idx, self.vals, self.entry_index]
        arrays += [a for a in (self.t_row_ptr, self.t_col_idx, self.t_vals) if a is not None]
        return sum(a.nbytes for a in arrays)

    def __post_init__(self):
        object.__setattr__(self, "_plan", _slot_plan(self.row_ptr))
        if self.t_row_ptr is not None:
            object.__setattr__(self, "_t_plan", _slot_plan(self.t_row_ptr))

    def local_matvec(self, x_local, transpose: bool = False):
        if transpose:
            if self.t_row_ptr is None:
                raise ValueError("no transposed block (pattern not structurally symmetric)")
            return csr_rows_matvec(self.t_row_ptr, self.t_col_idx, self.t_vals, x_local, self._t_plan)
        return csr_rows_matvec(self.row_ptr, self.col_idx, self.vals, x_local, self._plan)


def _to_local(owned, halo, gidx):
    gidx = np.asarray(gidx, dtype=np.int64)
    out = np.full(gidx.shape, -1, dtype=np.int64)
    for base, ids in ((0, owned), (owned.size, halo)):
        if ids.size == 0:
            continue
        k = np.clip(np.searchsorted(ids, gidx), 0, ids.size - 1)
        hit = ids[k] == gidx
        out[hit] = base + k[hit]
    return out


def _owned_block(M: SparseCoo, owned, to_local):
    rows_mask = np.isin(M.rows, owned)
    entries = np.flatnonzero(rows_mask)
    local_rows = np.searchsorted(owned, M.rows[entries])
    counts = np.bincount(local_rows, minlength=owned.size)
    row_ptr = np.zeros(owned.size + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    cols = to_local(M.cols[entries])
    return row_ptr, cols, M.vals[entries].copy(), entries


def build_local(A: SparseCoo, part_of, rank: int) -> LocalPartition:
    """Extract rank ``rank``'s block, halo set and halo map from the global matrix."""
    part_of = np.asarray(part_of, dtype=np.int64)
    if A.shape[0] != A.shape[1]:
        raise ShapeError("distributed solves need a square matrix")
    if part_of.shape != (A.n,):
        raise ValueError(f"part_of must have length {A.n}")
    owned = np.flatnonzero(part_of == rank)
    i, j = _symmetric_edges(A)
    cross = part_of[i] != part_of[j]
    ci, cj = i[cross], j[cross]
    mine = part_of[ci] == rank
    halo = np.unique(cj[mine])

    neighbors = tuple(int(q) for q in np.unique(part_of[halo]))
    send_idx, recv_idx = {}, {}
    for q in neighbors:
        # my owned nodes adjacent to q's owned nodes = what q holds as halo from me
        send_g = np.unique(ci[mine & (part_of[cj] == q)])
        send_idx[q] = np.searchsorted(owned, send_g)
        recv_g = halo[part_of[halo] == q]
        recv_idx[q] = owned.size + np.searchsorted(halo, recv_g)

    def to_local(g):
        return _to_local(owned, halo, g)

    row_ptr, cols, vals, entries = _owned_block(A, owned, to_local)
    sym = A.is_structurally_symmetric()
    t_parts = (None, None, None)
    if sym:
        t_parts = _owned_block(A.transpose(), owned, to_local)[:3]
    halo_map = HaloMap(owned.size, neighbors, send_idx, recv_idx)
    return LocalPartition(rank, A.n, owned, halo, row_ptr, cols, vals, entries,
                          halo_map, sym, *t_parts)


def halo_exchange(transport: Transport, x_local, halo_map: HaloMap, epoch: int):
    """Refresh the halo slots of ``x_local`` (in place) from neighbor owners.

    Phase 1 posts every send and receive, phase 2 waits for all of them.
    Returns the updated halo slice.
    """
    transport.claim_epoch(epoch)
    transport.stats.halo_exchanges += 1
    transport.stats.record("halo_exchange", epoch)
    n_owned = halo_map.n_owned
    if halo_map.is_empty:
        return x_local[n_owned:]
    requests = []
    for q in halo_map.neighbors:
        transport.isend(q, epoch, x_local[halo_map.send_idx[q]])
        requests.append(transport.irecv(q, epoch))
    for q, values in zip(halo_map.neighbors, transport.synchronize(requests)):
        slots = halo_map.recv_idx[q]
        if values.size != slots.size:
            raise TransportError(
                f"rank {transport.rank}: expected {slots.size} halo values from rank {q}, got {values.size}"
            )
        x_local[slots] = values
    return x_local[n_owned:]


def dist_spmv(local: LocalPartition, transport: Transport, x_owned, transpose: bool = False):
    """Owned slice of ``A @ x`` (or ``A^T @ x``): halo exchange, then local product."""
    x_owned = np.asarray(x_owned, dtype=np.float64)
    if x_owned.shape != (local.n_owned,):
        raise ShapeError(f"x_owned has shape {x_owned.shape}, expected ({local.n_owned},)")
    x_local = np.concatenate([x_owned, np.zeros(local.n_halo)])
    halo_exchange(transport, x_local, local.halo_map, transport.next_epoch())
    return local.local_matvec(x_local, transpose)
