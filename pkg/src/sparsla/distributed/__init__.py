"""Domain decomposition: partitioning, halo exchange, distributed CG."""

from .local import HaloMap, LocalPartition, build_local, dist_spmv, halo_exchange
from .partition import PartitionPlan, make_plan, partition_contiguous, partition_rcb
from .solvers import all_reduce_sum, dist_adjoint_solve, dist_cg, gather_solution
from .transport import (
    DEFAULT_TIMEOUT,
    InProcessHub,
    InProcessTransport,
    Transport,
    TransportStats,
    decode_message,
    encode_message,
    run_ranks,
)

__all__ = [
    "DEFAULT_TIMEOUT",
    "HaloMap",
    "InProcessHub",
    "InProcessTransport",
    "LocalPartition",
    "PartitionPlan",
    "Transport",
    "TransportStats",
    "all_reduce_sum",
    "build_local",
    "decode_message",
    "dist_adjoint_solve",
    "dist_cg",
    "dist_spmv",
    "encode_message",
    "gather_solution",
    "halo_exchange",
    "make_plan",
    "partition_contiguous",
    "partition_rcb",
    "run_ranks",
]
