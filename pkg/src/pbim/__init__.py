"""Projected block-iterative reconstruction with noise-aware relaxation."""
from .harness import ExperimentSpec, ProblemSpec, emit_bound_table, load_spec, run_sweep
from .relaxation import (
    NoiseBoundInputs,
    RelaxationSchedule,
    noise_bound_decreasing,
    noise_bound_general,
    rule_bound,
    theta_opt_search,
    zeta,
)
from .sets import Box, HalfSpace, NonNegative, Singleton, WholeSpace, project, relaxed_project
from .solver import (
    ErrorHistory,
    SolverConfig,
    block_cq_solve,
    build_problem,
    detect_semiconvergence,
    paired_run,
    pbim_solve,
    psirt_solve,
)
from .sparse import BlockPartition, SparseMatrix, csr_from_triplets, partition_blocks
from .spectral import estimate_spectrum, power_method
from .tomo import make_tomo_problem, shepp_logan
from .weighting import build_block_weights, build_weights

__version__ = "0.1.0"

__all__ = [
    "BlockPartition",
    "Box",
    "ErrorHistory",
    "ExperimentSpec",
    "HalfSpace",
    "NoiseBoundInputs",
    "NonNegative",
    "ProblemSpec",
    "RelaxationSchedule",
    "Singleton",
    "SolverConfig",
    "SparseMatrix",
    "WholeSpace",
    "block_cq_solve",
    "build_block_weights",
    "build_problem",
    "build_weights",
    "csr_from_triplets",
    "detect_semiconvergence",
    "emit_bound_table",
    "estimate_spectrum",
    "load_spec",
    "make_tomo_problem",
    "noise_bound_decreasing",
    "noise_bound_general",
    "paired_run",
    "partition_blocks",
    "pbim_solve",
    "power_method",
    "project",
    "psirt_solve",
    "relaxed_project",
    "rule_bound",
    "run_sweep",
    "shepp_logan",
    "theta_opt_search",
    "zeta",
]
