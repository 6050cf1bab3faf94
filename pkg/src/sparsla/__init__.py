"""Differentiable sparse linear algebra.

Iterative and direct linear solvers, a symmetric eigensolver, Newton and
fixed-point nonlinear solvers, adjoint-method gradients whose memory does not
depend on the iteration count, and an in-process domain-decomposition layer.
"""

from .adjoint import AdjointContext, GradientBundle, gradcheck, solve_backward, solve_forward
from .eigen import EigenResult, eig_backward, eig_smallest
from .errors import (
    ConvergenceError,
    DegenerateEigenvalueError,
    DenseLimitError,
    IndexBoundsError,
    LineSearchError,
    MatrixMarketError,
    ShapeError,
    SingularMatrixError,
    SparslaError,
    SymmetryError,
    TransportError,
)
from .linear import (
    DEFAULT_DENSE_THRESHOLD,
    SolveOptions,
    SolveReport,
    auto_solve,
    bicgstab_solve,
    cg_solve,
    count_solves,
    dense_lu_solve,
    dense_threshold,
    jacobi_build,
    select_backend,
    solve_with,
)
from .mmio import read_matrix_market, write_matrix_market
from .nonlinear import (
    FixedPointReport,
    NewtonContext,
    NonlinearReport,
    ResidualSystem,
    anderson_solve,
    fd_jacobian,
    newton_backward,
    newton_solve,
    picard_solve,
)
from .problems import PoissonProblem, poisson2d, poisson_grid, random_spd
from .sparse import (
    CsrMatrix,
    SparseCoo,
    coo_identity,
    coo_new,
    coo_to_csr,
    from_dense,
    spmm,
    spmv,
    spmv_transpose,
    to_dense,
)

__version__ = "0.1.0"
