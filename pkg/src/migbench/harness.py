"""Experiment plumbing: dataset loading, solver dispatch, trace output.

A run is described by an :class:`ExperimentSpec` (either a LibSVM file or a
synthetic instance), executed by :func:`run_experiment`, which resolves the
reference optimum (cached), fills in per-epoch suboptimality, and writes
the trace CSV. :func:`speedup_bench` times the asynchronous solvers to a
fixed suboptimality target across thread counts.

Solver ids: mig, mig-nsc, sparse-mig, async-mig, svrg, saga, kromagnon,
asaga.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import dense, lockfree, sparse
from .data import SparseDataset, compute_feature_stats, normalize_rows, parse_libsvm
from .objectives import Objective, make_objective
from .reference import ReferenceCache, ReferenceOptimum, reference_optimum
from .synthetic import generate_synthetic
from .traces import RunResult, with_subopt, write_trace_csv

SOLVERS = ("mig", "mig-nsc", "sparse-mig", "async-mig", "svrg", "saga", "kromagnon", "asaga")

DENSE_RUNNERS = {
    "mig": dense.mig_sc_run,
    "mig-nsc": dense.mig_nsc_run,
    "svrg": dense.svrg_run,
    "saga": dense.saga_run,
}
ASYNC_RUNNERS = {
    "async-mig": lockfree.async_mig_run,
    "kromagnon": lockfree.kromagnon_run,
    "asaga": lockfree.asaga_run,
}


@dataclass
class SyntheticSpec:
    n: int
    d: int
    nnz: int
    noise: float


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one run."""

    data: str | None = None
    synthetic: SyntheticSpec | None = None
    loss: str = "logistic"
    reg: str = "l2"
    lam: float = 1e-4
    solver: str = "mig"
    epochs: int = 20
    m: int | None = None
    eta: float | None = None
    theta: float | None = None
    option: str = "II"
    restart_every: int | str | None = None
    threads: int = 1
    seed: int = 0
    out: str | None = None
    normalize: bool = True
    bias: bool = False

    def __post_init__(self):
        if (self.data is None) == (self.synthetic is None):
            raise ValueError("exactly one of data/synthetic must be given")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; known: {', '.join(SOLVERS)}")


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    result: RunResult
    reference: ReferenceOptimum
    objective: Objective
    dataset: SparseDataset = field(repr=False)

    @property
    def traces(self):
        return self.result.traces


def load_dataset(spec: ExperimentSpec) -> SparseDataset:
    """Materialize the dataset a spec refers to (normalized by default)."""
    if spec.data is not None:
        with open(spec.data) as fh:
            ds = parse_libsvm(fh.read())
        if spec.bias:
            from .data import with_bias_column

            ds = with_bias_column(ds)
        if spec.normalize:
            ds = normalize_rows(ds)
        return ds
    s = spec.synthetic
    task = "regression" if spec.loss == "squared" else "classification"
    return generate_synthetic(s.n, s.d, s.nnz, s.noise, spec.seed, task=task)


def _solver_config(spec: ExperimentSpec):
    common = dict(epochs=spec.epochs, m=spec.m, eta=spec.eta, theta=spec.theta, seed=spec.seed)
    if spec.solver in DENSE_RUNNERS:
        return dense.SolverConfig(**common)
    if spec.solver == "sparse-mig":
        return sparse.SparseSolverConfig(option=spec.option,
                                         restart_every=spec.restart_every, **common)
    return lockfree.AsyncConfig(option=spec.option, threads=spec.threads, **common)


def dispatch(
    obj: Objective,
    ds: SparseDataset,
    spec: ExperimentSpec,
    x0: np.ndarray | None = None,
    stop_below: float | None = None,
) -> RunResult:
    """Run the spec's solver on an already-built problem."""
    if x0 is None:
        x0 = np.zeros(ds.n_cols)
    cfg = _solver_config(spec)
    if spec.solver in DENSE_RUNNERS:
        return DENSE_RUNNERS[spec.solver](obj, ds, x0, cfg)
    if spec.solver == "sparse-mig":
        return sparse.sparse_mig_run(obj, ds, x0, cfg)
    stats = compute_feature_stats(ds)
    return ASYNC_RUNNERS[spec.solver](obj, ds, x0, cfg, stats=stats, stop_below=stop_below)


def run_experiment(spec: ExperimentSpec, cache: ReferenceCache | None = None) -> ExperimentReport:
    """Execute a spec end to end: solve, attach suboptimality against the
    cached reference optimum, and write the trace CSV when ``out`` is set."""
    ds = load_dataset(spec)
    obj = make_objective(ds, spec.loss, spec.reg, spec.lam)
    result = dispatch(obj, ds, spec)
    ref = reference_optimum(obj, ds, cache=cache)
    result.traces = with_subopt(result.traces, ref.fstar)
    if spec.out:
        write_trace_csv(result.traces, spec.out)
    return ExperimentReport(spec=spec, result=result, reference=ref,
                            objective=obj, dataset=ds)


@dataclass
class SpeedupRow:
    threads: int
    wall_ms: float
    oracle_calls: int
    epochs: int
    reached: bool
    speedup: float


def speedup_bench(
    spec: ExperimentSpec,
    thread_list: list[int],
    target_subopt: float = 1e-5,
    max_epochs: int = 200,
    cache: ReferenceCache | None = None,
) -> list[SpeedupRow]:
    """Time an async solver to a fixed suboptimality target per thread count.

    Wall time is solver-only (tracing excluded); the speedup column is
    relative to the first thread count in the list. Runs that exhaust
    ``max_epochs`` before the target report reached=False and a NaN speedup.
    """
    if spec.solver not in ASYNC_RUNNERS:
        raise ValueError(f"speedup_bench needs an async solver, got {spec.solver!r}")
    ds = load_dataset(spec)
    obj = make_objective(ds, spec.loss, spec.reg, spec.lam)
    stats = compute_feature_stats(ds)
    ref = reference_optimum(obj, ds, cache=cache)
    stop = ref.fstar + target_subopt

    rows: list[SpeedupRow] = []
    base_ms = None
    for t in thread_list:
        run_spec = copy.deepcopy(spec)
        run_spec.threads = t
        run_spec.epochs = max_epochs
        cfg_result = dispatch(obj, ds, run_spec, stop_below=stop)
        last = cfg_result.traces[-1]
        reached = last.objective <= stop
        if base_ms is None:
            base_ms = last.wall_ms if reached else float("nan")
        speed = base_ms / last.wall_ms if reached and base_ms == base_ms else float("nan")
        rows.append(SpeedupRow(threads=t, wall_ms=last.wall_ms,
                               oracle_calls=last.oracle_calls,
                               epochs=last.epoch, reached=reached, speedup=speed))
    return rows
