"""Accelerated variance-reduced solvers for finite sums, with a benchmark
harness, reference-optimum cache, CLI and HTTP service."""

from .data import (
    FeatureStats,
    ParseError,
    SparseDataset,
    SparseMatrix,
    compute_feature_stats,
    normalize_rows,
    parse_libsvm,
    serialize_libsvm,
)
from .dense import (
    SolverConfig,
    mig_nsc_run,
    mig_sc_run,
    saga_run,
    svrg_run,
    theoretical_params_sc,
    weighted_epoch_average,
)
from .harness import ExperimentSpec, SyntheticSpec, run_experiment, speedup_bench
from .lockfree import AsyncConfig, SharedIterate, asaga_run, async_mig_run, kromagnon_run
from .objectives import (
    Objective,
    evaluate,
    full_gradient,
    make_objective,
    prox_step,
    regularized_sparse_gradient,
    sample_gradient,
    smoothness_constant,
)
from .reference import ReferenceCache, ReferenceOptimum, reference_optimum
from .sparse import (
    SparseSolverConfig,
    restart_period,
    sparse_mig_epoch,
    sparse_mig_run,
)
from .synthetic import generate_synthetic
from .traces import EpochTrace, RunResult, read_trace_csv, write_trace_csv

__version__ = "0.1.0"
