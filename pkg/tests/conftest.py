import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_coo(rng, n, m=None, nnz=None, dupes=False):
    from sparsla import SparseCoo

    m = n if m is None else m
    nnz = max(1, (n * m) // 4) if nnz is None else nnz
    rows = rng.integers(0, n, nnz)
    cols = rng.integers(0, m, nnz)
    if not dupes:
        key = np.unique(rows * m + cols)
        rows, cols = np.divmod(key, m)
    vals = rng.standard_normal(rows.size)
    return SparseCoo(rows, cols, vals, (n, m))


ACCEPTANCE_LINES = {}


def record_acceptance(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line, flush=True)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
