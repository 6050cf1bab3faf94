import numpy as np
import pytest

from sparsla import poisson_grid, read_matrix_market, to_dense, write_matrix_market
from sparsla.errors import MatrixMarketError

from conftest import random_coo


def _write(tmp_path, text, name="m.mtx"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_single_entry(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 2.5\n")
    A = read_matrix_market(p)
    assert A.shape == (1, 1)
    assert (A.rows.tolist(), A.cols.tolist(), A.vals.tolist()) == ([0], [0], [2.5])


def test_symmetric_expansion(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real symmetric\n% lower triangle\n2 2 3\n"
                         "1 1 4\n2 1 -1\n2 2 5\n")
    A = read_matrix_market(p)
    assert to_dense(A).tolist() == [[4.0, -1.0], [-1.0, 5.0]]


def test_array_format_rejected(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n")
    with pytest.raises(MatrixMarketError, match="non-coordinate"):
        read_matrix_market(p)


def test_bad_banner(tmp_path):
    p = _write(tmp_path, "hello\n")
    with pytest.raises(MatrixMarketError, match="line 1"):
        read_matrix_market(p)


def test_parse_error_line_number(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n% c\n2 2 2\n1 1 1.0\n2 x 3.0\n")
    with pytest.raises(MatrixMarketError, match="line 5"):
        read_matrix_market(p)


def test_index_out_of_range(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n")
    with pytest.raises(MatrixMarketError, match="line 3"):
        read_matrix_market(p)


def test_entry_count_mismatch(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n")
    with pytest.raises(MatrixMarketError, match="declared 2"):
        read_matrix_market(p)


def test_complex_field_rejected(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n")
    with pytest.raises(MatrixMarketError, match="field"):
        read_matrix_market(p)


def test_integer_field_accepted(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate integer general\n2 2 1\n2 2 7\n")
    assert read_matrix_market(p).vals.tolist() == [7.0]


def test_round_trip_general(tmp_path, rng):
    A = random_coo(rng, 15, 11, nnz=60)
    A = A.with_values(A.vals * np.pi / 7)
    p = tmp_path / "a.mtx"
    write_matrix_market(A, p, comment="random")
    B = read_matrix_market(p)
    assert B.shape == A.shape
    assert np.array_equal(B.rows, A.rows) and np.array_equal(B.cols, A.cols)
    assert np.array_equal(B.vals, A.vals)


def test_round_trip_symmetric(tmp_path):
    A = poisson_grid(4, 3)
    p = tmp_path / "p.mtx"
    write_matrix_market(A, p, symmetric=True)
    assert "symmetric" in p.read_text().splitlines()[0]
    B = read_matrix_market(p)
    assert np.array_equal(to_dense(A), to_dense(B))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_matrix_market(tmp_path / "nope.mtx")
