"""Benchmark records, solver sweeps, the distributed benchmark, and CSV output.

CSV schema (one row per ``BenchRecord``, columns in this order)::

    dof, backend, ranks, repeat, wall_time_s, median_wall_time_s,
    memory_bytes, bytes_per_dof, iterations, residual_norm,
    relative_residual, status, message

``residual_norm`` is always ``||A x - b||_2`` recomputed after the solve by
:func:`residual_norm`; ``relative_residual`` divides it by ``||b||_2``.
``memory_bytes`` is the sum of live solver array bytes (matrix storage plus
work vectors), not process RSS. ``status`` is ``ok``, ``failed`` or
``skipped``.
"""

from __future__ import annotations

import csv
import dataclasses
import statistics
import sys
import time
from dataclasses import dataclass

import numpy as np

from .distributed import (build_local, dist_cg, gather_solution, make_plan, partition_contiguous,
                          partition_rcb, run_ranks)
from .linear import SolveOptions, cg_solve, dense_threshold, solve_with
from .problems import poisson2d
from .sparse import SparseCoo, spmv


@dataclass
class BenchRecord:
    dof: int
    backend: str
    ranks: int = 1
    repeat: int = 0
    wall_time_s: float = 0.0
    median_wall_time_s: float = 0.0
    memory_bytes: int = 0
    bytes_per_dof: float = 0.0
    iterations: int = 0
    residual_norm: float = float("nan")
    relative_residual: float = float("nan")
    status: str = "ok"
    message: str = ""


@dataclass
class RankRecord:
    rank: int
    n_owned: int
    halo_size: int
    neighbors: str
    messages_sent: int
    bytes_sent: int
    halo_exchanges: int
    all_reduces: int


def residual_norm(A: SparseCoo, x, b) -> float:
    return float(np.linalg.norm(spmv(A.tocsr(), x) - b))


def _fill_residual(rec: BenchRecord, A, x, b):
    rec.residual_norm = residual_norm(A, x, b)
    bn = float(np.linalg.norm(b))
    rec.relative_residual = rec.residual_norm / bn if bn > 0 else rec.residual_norm
    rec.bytes_per_dof = rec.memory_bytes / rec.dof if rec.dof else 0.0


def run_solve(A: SparseCoo, b, backend: str, opts: SolveOptions | None = None, repeat: int = 0):
    """One timed solve; returns ``(x, BenchRecord)``. Failures become a failed row."""
    opts = opts or SolveOptions()
    rec = BenchRecord(A.n, backend, repeat=repeat)
    try:
        t0 = time.perf_counter()
        x, report = solve_with(backend, A, b, opts)
        rec.wall_time_s = time.perf_counter() - t0
    except Exception as exc:  # a bad cell must not stop a sweep
        rec.status, rec.message = "failed", f"{type(exc).__name__}: {exc}"
        return None, rec
    rec.median_wall_time_s = rec.wall_time_s
    rec.iterations = report.iterations
    rec.memory_bytes = report.memory_bytes
    _fill_residual(rec, A, x, b)
    if not report.converged:
        rec.status, rec.message = "failed", report.message
    return x, rec


def bench_sweep(sizes, backends, repeats: int = 3, opts: SolveOptions | None = None,
                threshold: int | None = None, rhs: str = "ones", seed: int = 0) -> list[BenchRecord]:
    """Poisson N x N for each size and backend, ``repeats`` times each.

    ``dense_lu`` is skipped (one recorded row) when ``N*N`` reaches the
    dense threshold.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    threshold = dense_threshold() if threshold is None else threshold
    records = []
    for N in sizes:
        prob = poisson2d(N, rhs, seed)
        for backend in backends:
            if backend == "dense_lu" and prob.n >= threshold:
                records.append(BenchRecord(prob.n, backend, status="skipped",
                                           message=f"n={prob.n} at or above dense threshold {threshold}"))
                continue
            cell = [run_solve(prob.matrix, prob.rhs, backend, opts, r)[1] for r in range(repeats)]
            times = [r.wall_time_s for r in cell if r.status == "ok"]
            med = statistics.median(times) if times else float("nan")
            for r in cell:
                r.median_wall_time_s = med
            records.extend(cell)
    return records


@dataclass
class DistResult:
    record: BenchRecord
    ranks: list
    max_diff: float
    x: np.ndarray


def _dist_worker(t, A, part_of, b, atol, max_iter):
    local = build_local(A, part_of, t.rank)
    x_owned, report = dist_cg(local, t, b[local.owned], atol, max_iter)
    owned = [np.flatnonzero(part_of == p) for p in range(t.size)]
    x = gather_solution(t, x_owned, owned)
    return x, report, local


def distbench(N: int, P: int, partitioner: str = "contiguous", atol: float = 1e-10,
              max_iter: int = 10000, rhs: str = "ones", seed: int = 0) -> DistResult:
    """Distributed CG on the N x N Poisson problem with ``P`` in-process ranks.

    The gathered solution is compared with serial unpreconditioned CG;
    ``max_diff`` is their infinity-norm distance.
    """
    prob = poisson2d(N, rhs, seed)
    A, b = prob.matrix, prob.rhs
    if partitioner == "contiguous":
        part_of = partition_contiguous(A.n, P)
    elif partitioner == "rcb":
        part_of = partition_rcb(prob.coords, P)
    else:
        raise ValueError(f"unknown partitioner {partitioner!r}")
    plan = make_plan(A, part_of)

    t0 = time.perf_counter()
    results, transports = run_ranks(P, _dist_worker, A, part_of, b, atol, max_iter)
    wall = time.perf_counter() - t0
    x = results[0][0]
    report = results[0][1]

    x_serial, _ = cg_solve(A, b, SolveOptions(atol=atol, max_iter=max_iter, preconditioner="none"))
    max_diff = float(np.max(np.abs(x - x_serial)))

    mem = sum(res[1].memory_bytes for res in results)
    rec = BenchRecord(A.n, f"dist_cg[{partitioner}]", P, 0, wall, wall, mem,
                      iterations=report.iterations)
    _fill_residual(rec, A, x, b)
    if not report.converged:
        rec.status, rec.message = "failed", report.message
    ranks = []
    for p, t in enumerate(transports):
        s = t.stats
        ranks.append(RankRecord(p, plan.owned[p].size, plan.halo[p].size,
                                " ".join(str(int(q)) for q in plan.neighbors[p]),
                                s.messages_sent, s.bytes_sent, s.halo_exchanges, s.all_reduces))
    return DistResult(rec, ranks, max_diff, x)


def write_csv(records, path=None, fields=None) -> None:
    """Write dataclass records as RFC-4180 CSV (header always written).

    ``path`` of ``None`` or ``"-"`` writes to stdout. ``fields`` defaults to
    the record type's fields, or ``BenchRecord``'s when ``records`` is empty.
    """
    records = list(records)
    if fields is None:
        cls = type(records[0]) if records else BenchRecord
        fields = [f.name for f in dataclasses.fields(cls)]
    if path is None or str(path) == "-":
        _write(sys.stdout, records, fields)
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            _write(fh, records, fields)


def _write(fh, records, fields):
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(fields)
    for r in records:
        w.writerow([_fmt(getattr(r, f)) for f in fields])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
