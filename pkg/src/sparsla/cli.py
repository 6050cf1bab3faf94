"""Command-line entry point: ``sparsla {solve,bench,gradcheck,eig,distbench}``.

Exit codes: 0 success, 1 a numerical gate failed (non-convergence, gradient
error at or above 1e-5, distributed/serial mismatch above 1e-10), 2 bad input
(missing file, malformed Matrix Market, invalid option).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from . import bench, verification
from .eigen import eig_smallest
from .errors import ConvergenceError, DegenerateEigenvalueError, SingularMatrixError, SparslaError
from .linear import BACKENDS, SolveOptions, select_backend
from .mmio import read_matrix_market
from .problems import poisson2d

GRAD_TOL = 1e-5
DIST_TOL = 1e-10

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


@dataclass
class EigRow:
    index: int
    eigenvalue: float
    residual_norm: float
    converged: bool
    method: str
    iterations: int


def _csv_ints(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _csv_words(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_problem(p, default_poisson=None):
    src = p.add_mutually_exclusive_group(required=default_poisson is None)
    src.add_argument("--poisson", type=int, metavar="N", default=default_poisson,
                     help="N x N 2-D Poisson problem")
    src.add_argument("--mtx", metavar="PATH", help="Matrix Market coordinate file")
    p.add_argument("--rhs", choices=("ones", "manufactured"), default="ones",
                   help="right-hand side for generated problems and --mtx (default: ones)")


def _add_solver(p):
    p.add_argument("--atol", type=float, default=1e-10)
    p.add_argument("--rtol", type=float, default=0.0)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--out", metavar="CSV-PATH", help="write CSV here instead of stdout")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsla", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one linear system and print a CSV row")
    _add_problem(p)
    _add_solver(p)
    p.add_argument("--backend", choices=("auto",) + BACKENDS, default="auto")
    p.add_argument("--solution", metavar="PATH", help="also write x, one value per line")

    p = sub.add_parser("bench", help="backend sweep over Poisson sizes")
    _add_solver(p)
    p.add_argument("--sizes", type=_csv_ints, default=[16, 32, 64], help="grid sides, e.g. 16,32,64")
    p.add_argument("--backends", type=_csv_words, default=["cg", "dense_lu"])
    p.add_argument("--backend", dest="backends", type=lambda s: [s], help="single-backend shorthand")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--rhs", choices=("ones", "manufactured"), default="ones")

    p = sub.add_parser("gradcheck", help="adjoint gradients versus central finite differences")
    p.add_argument("--eps", type=float, default=verification.DEFAULT_EPS)
    p.add_argument("--samples", type=int, default=verification.DEFAULT_SAMPLES,
                   help="parameters checked per experiment")
    p.add_argument("--linear-n", type=int, default=1000)
    p.add_argument("--eig-k", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="CSV-PATH")

    p = sub.add_parser("eig", help="smallest eigenvalues of a symmetric matrix")
    _add_problem(p)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--method", choices=("auto", "dense", "lobpcg"), default="auto")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="CSV-PATH")

    p = sub.add_parser("distbench", help="distributed CG with in-process ranks")
    p.add_argument("--poisson", type=int, metavar="N", default=64)
    p.add_argument("--ranks", type=int, default=4, metavar="P")
    p.add_argument("--partitioner", choices=("contiguous", "rcb"), default="contiguous")
    p.add_argument("--atol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--rhs", choices=("ones", "manufactured"), default="ones")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="CSV-PATH", help="benchmark record CSV")
    p.add_argument("--rank-out", metavar="CSV-PATH", help="per-rank halo and message CSV")
    return parser


def _load_problem(args):
    if args.mtx is not None:
        try:
            A = read_matrix_market(args.mtx)
        except FileNotFoundError:
            raise InputError(f"no such file: {args.mtx}") from None
        except OSError as exc:
            raise InputError(f"cannot read {args.mtx}: {exc}") from None
        if A.shape[0] != A.shape[1]:
            raise InputError(f"{args.mtx}: matrix is {A.shape[0]} x {A.shape[1]}, need square")
        if args.rhs == "manufactured":
            x_star = np.random.default_rng(args.seed).uniform(-1.0, 1.0, A.n)
            b = A.tocsr() @ x_star
        else:
            b = np.ones(A.n)
        return A, b
    prob = poisson2d(args.poisson, args.rhs, args.seed)
    return prob.matrix, prob.rhs


def cmd_solve(args) -> int:
    A, b = _load_problem(args)
    opts = SolveOptions(args.atol, args.rtol, args.max_iter)
    backend = select_backend(A) if args.backend == "auto" else args.backend
    x, rec = bench.run_solve(A, b, backend, opts)
    bench.write_csv([rec], args.out)
    if x is not None and args.solution:
        np.savetxt(args.solution, x, fmt="%.17g")
    if rec.status != "ok":
        print(f"solve failed: {rec.message}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_bench(args) -> int:
    opts = SolveOptions(args.atol, args.rtol, args.max_iter)
    for b in args.backends:
        if b not in BACKENDS:
            raise InputError(f"unknown backend {b!r}; expected one of {', '.join(BACKENDS)}")
    records = bench.bench_sweep(args.sizes, args.backends, args.repeats, opts, rhs=args.rhs, seed=args.seed)
    bench.write_csv(records, args.out)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rows = [
        verification.check_linear(args.linear_n, args.eps, args.samples, args.seed),
        verification.check_eigen(args.eig_k, eps=args.eps, samples=args.samples, seed=args.seed),
        verification.check_nonlinear(eps=args.eps, samples=args.samples, seed=args.seed),
    ]
    if args.out:
        bench.write_csv(rows, args.out)
    width = max(len(r.operation) for r in rows)
    print(f"{'operation':<{width}}  {'rel_error':>10}  {'forward':<10}  backward")
    for r in rows:
        print(f"{r.operation:<{width}}  {r.rel_error:>10.2e}  {r.forward:<10}  {r.backward}")
    bad = [r for r in rows if not r.rel_error < GRAD_TOL]
    for r in bad:
        print(f"gradcheck failed: {r.operation} rel. error {r.rel_error:.2e} >= {GRAD_TOL:g}", file=sys.stderr)
    return EXIT_FAIL if bad else EXIT_OK


def cmd_eig(args) -> int:
    A, _ = _load_problem(args)
    res = eig_smallest(A, args.k, args.tol, args.max_iter, args.method, args.seed)
    rows = [EigRow(i, float(lam), float(r), bool(c), res.method, res.iterations)
            for i, (lam, r, c) in enumerate(zip(res.lambdas, res.residual_norms, res.converged))]
    bench.write_csv(rows, args.out)
    if not res.all_converged:
        print(f"eig: {int(np.sum(~res.converged))} of {args.k} pairs did not converge", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_distbench(args) -> int:
    out = bench.distbench(args.poisson, args.ranks, args.partitioner, args.atol, args.max_iter,
                          args.rhs, args.seed)
    if not out.max_diff <= DIST_TOL:
        print(f"distbench: gathered solution differs from serial CG by {out.max_diff:.3e} "
              f"(limit {DIST_TOL:g}); no benchmark written", file=sys.stderr)
        return EXIT_FAIL
    bench.write_csv([out.record], args.out)
    if args.rank_out:
        bench.write_csv(out.ranks, args.rank_out)
    else:
        if not args.out:
            print()
        bench.write_csv(out.ranks, None)
    if out.record.status != "ok":
        print(f"distbench: {out.record.message}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "bench": cmd_bench,
    "gradcheck": cmd_gradcheck,
    "eig": cmd_eig,
    "distbench": cmd_distbench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConvergenceError, SingularMatrixError, DegenerateEigenvalueError) as exc:
        print(f"sparsla {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except InputError as exc:
        print(f"sparsla {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SparslaError, ValueError) as exc:
        print(f"sparsla {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
