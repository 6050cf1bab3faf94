import csv
import io

import numpy as np
import pytest

from sparsla import SolveOptions, coo_identity, from_dense, poisson2d, spmv
from sparsla.bench import BenchRecord, bench_sweep, distbench, read_csv, residual_norm, run_solve, write_csv


def test_write_csv_empty_header_only(tmp_path):
    p = tmp_path / "e.csv"
    write_csv([], p)
    text = p.read_text()
    assert text.count("\n") == 1
    assert text.startswith("dof,backend,ranks,repeat,wall_time_s")


def test_write_csv_round_trip(tmp_path):
    recs = [BenchRecord(100, "cg", iterations=7, residual_norm=1.25e-11, relative_residual=0.1),
            BenchRecord(4, 'odd, "name"', status="failed", message="line1\nline2")]
    p = tmp_path / "r.csv"
    write_csv(recs, p)
    rows = read_csv(p)
    assert rows[0]["dof"] == "100" and float(rows[0]["residual_norm"]) == 1.25e-11
    assert rows[1]["backend"] == 'odd, "name"'
    assert rows[1]["message"] == "line1\nline2"
    raw = p.read_bytes()
    assert b'"odd, ""name"""' in raw and raw.count(b"\r\n") >= 3


def test_write_csv_stdout(capsys):
    write_csv([BenchRecord(1, "cg")], "-")
    out = capsys.readouterr().out
    assert list(csv.reader(io.StringIO(out)))[1][:2] == ["1", "cg"]


def test_run_solve_residual_recomputed():
    prob = poisson2d(12)
    x, rec = run_solve(prob.matrix, prob.rhs, "cg")
    assert rec.status == "ok"
    assert rec.residual_norm == float(np.linalg.norm(spmv(prob.matrix.tocsr(), x) - prob.rhs))
    assert rec.residual_norm == residual_norm(prob.matrix, x, prob.rhs)
    assert rec.relative_residual == pytest.approx(rec.residual_norm / 12.0)
    assert rec.bytes_per_dof == rec.memory_bytes / rec.dof


def test_run_solve_failure_is_recorded():
    A = from_dense(np.ones((2, 2)))
    x, rec = run_solve(A, np.ones(2), "dense_lu")
    assert x is None and rec.status == "failed" and "SingularMatrixError" in rec.message
    prob = poisson2d(16)
    _, rec = run_solve(prob.matrix, prob.rhs, "cg", SolveOptions(max_iter=2))
    assert rec.status == "failed" and rec.iterations == 2


def test_sweep_rows_and_growth():
    recs = bench_sweep([16, 32, 64], ["cg", "dense_lu"], repeats=3)
    ok = [r for r in recs if r.status == "ok"]
    skipped = [r for r in recs if r.status == "skipped"]
    assert len(recs) >= 6
    assert len(skipped) == 1 and skipped[0].dof == 4096 and skipped[0].backend == "dense_lu"
    cg_iters = {r.dof: r.iterations for r in ok if r.backend == "cg"}
    assert cg_iters[256] < cg_iters[1024] < cg_iters[4096]
    for dof in (256, 1024):
        cell = [r for r in ok if r.dof == dof and r.backend == "cg"]
        assert len(cell) == 3
        assert len({r.median_wall_time_s for r in cell}) == 1
        assert cell[0].median_wall_time_s == sorted(r.wall_time_s for r in cell)[1]


def test_sweep_deterministic():
    a = bench_sweep([8, 16], ["cg", "bicgstab"], repeats=2)
    b = bench_sweep([8, 16], ["cg", "bicgstab"], repeats=2)
    key = lambda r: (r.dof, r.backend, r.iterations, r.residual_norm, r.memory_bytes)  # noqa: E731
    assert [key(r) for r in a] == [key(r) for r in b]


def test_sweep_bad_cell_continues():
    recs = bench_sweep([4, 8], ["cg", "nope"], repeats=1)
    assert [r.status for r in recs] == ["ok", "failed", "ok", "failed"]


def test_distbench_rcb():
    out = distbench(64, 4, "rcb")
    assert out.max_diff <= 1e-10
    assert out.record.status == "ok" and out.record.ranks == 4
    assert [r.halo_size for r in out.ranks] == [64, 64, 64, 64]
    k = out.record.iterations
    assert all(r.halo_exchanges == k and r.all_reduces == 2 * k + 1 for r in out.ranks)


def test_distbench_single_rank_no_messages():
    out = distbench(16, 1)
    assert out.max_diff == 0.0
    assert out.ranks[0].messages_sent == 0 and out.ranks[0].halo_size == 0


def test_distbench_rcb_non_power_of_two():
    with pytest.raises(ValueError, match="power-of-two"):
        distbench(16, 5, "rcb")


def test_identity_solve():
    x, rec = run_solve(coo_identity(5), np.arange(5.0), "cg")
    assert np.array_equal(x, np.arange(5.0)) and rec.residual_norm == 0.0
