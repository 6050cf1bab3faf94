"""Collective operations and distributed Krylov solves over a ``Transport``."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeError, TransportError
from ..linear import SolveReport, dot
from .local import LocalPartition, dist_spmv, halo_exchange
from .transport import Transport


def all_reduce_sum(transport: Transport, local_scalar: float) -> float:
    """Global sum, accumulated in ascending rank order, returned on every rank."""
    return transport.all_reduce_sum(local_scalar)


def dist_cg(local: LocalPartition, transport: Transport, b_owned, atol: float = 1e-10,
            max_iter: int = 10000, transpose: bool = False):
    """Unpreconditioned CG on the distributed operator.

    Per iteration: one halo exchange (inside the SpMV) and two all-reduces,
    plus one all-reduce before the loop. Operations mirror the serial
    :func:`sparsla.linear.cg_solve` with ``preconditioner="none"``, so a
    single-rank run reproduces it bit for bit.
    """
    b = np.asarray(b_owned, dtype=np.float64)
    if b.shape != (local.n_owned,):
        raise ShapeError(f"b_owned has shape {b.shape}, expected ({local.n_owned},)")
    x = np.zeros_like(b)
    r = b.copy()
    rho = all_reduce_sum(transport, dot(r, r))
    res = math.sqrt(rho)
    p = r.copy()
    k = 0
    nspmv = 0
    message = ""
    while res > atol and k < max_iter:
        Ap = dist_spmv(local, transport, p, transpose)
        nspmv += 1
        pAp = all_reduce_sum(transport, dot(p, Ap))
        if not pAp > 0.0 or not math.isfinite(pAp):
            message = f"breakdown at iteration {k}: p^T A p = {pAp!r} (matrix not SPD?)"
            break
        alpha = rho / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        k += 1
        rho_new = all_reduce_sum(transport, dot(r, r))
        res = math.sqrt(rho_new)
        p = r + (rho_new / rho) * p
        rho = rho_new

    converged = res <= atol and not message
    if not converged and not message:
        message = f"no convergence in {k} iterations (residual {res:.3e} > {atol:.3e})"
    mem = local.nbytes + 4 * b.nbytes + (local.n_owned + local.n_halo) * 8
    return x, SolveReport(k, res, converged, nspmv, "cg", message, mem)


def dist_adjoint_solve(local: LocalPartition, transport: Transport, x_owned, grad_x_owned,
                       atol: float = 1e-10, max_iter: int = 10000):
    """Distributed adjoint of ``x = A^{-1} b``.

    Solves ``A^T lam = dL/dx`` with the transposed local block over the
    forward halo maps (valid because the pattern is structurally symmetric),
    then forms ``-lam_i * x_j`` for every owned-row entry. ``x_j`` for halo
    columns comes from one extra halo exchange.

    Returns ``(grad_b_owned, grad_vals_local, report)``; ``grad_vals_local``
    lines up with ``local.entry_index``.
    """
    if not local.structurally_symmetric:
        raise ValueError("distributed adjoint requires a structurally symmetric matrix")
    x_owned = np.asarray(x_owned, dtype=np.float64)
    lam, report = dist_cg(local, transport, grad_x_owned, atol, max_iter, transpose=True)
    x_local = np.concatenate([x_owned, np.zeros(local.n_halo)])
    halo_exchange(transport, x_local, local.halo_map, transport.next_epoch())
    rows = np.repeat(np.arange(local.n_owned), np.diff(local.row_ptr))
    grad_vals = -lam[rows] * x_local[local.col_idx]
    return lam, grad_vals, report


def gather_solution(transport: Transport, x_owned, owned_by_rank):
    """Assemble the global vector on rank 0 (``None`` on other ranks).

    ``owned_by_rank[p]`` lists the global ids rank ``p`` owns, in the order of
    its ``x_owned`` entries (``PartitionPlan.owned``).
    """
    x_owned = np.asarray(x_owned, dtype=np.float64)
    epoch = transport.next_epoch()
    transport.claim_epoch(epoch)
    if transport.rank != 0:
        transport.isend(0, epoch, x_owned)
        return None
    n = sum(len(o) for o in owned_by_rank)
    out = np.empty(n)
    out[np.asarray(owned_by_rank[0], dtype=np.int64)] = x_owned
    requests = [transport.irecv(p, epoch) for p in range(1, transport.size)]
    for p, values in zip(range(1, transport.size), transport.synchronize(requests)):
        ids = np.asarray(owned_by_rank[p], dtype=np.int64)
        if values.size != ids.size:
            raise TransportError(f"rank {p} sent {values.size} values, owns {ids.size}")
        out[ids] = values
    return out
