"""Lock-free asynchronous sparse solvers over a shared iterate.

Threads update a shared x without locks. The concurrency contract, verified
empirically by the hammer test in tests/test_lockfree.py, is:

  * per-coordinate adds are atomic read-modify-writes: `np.add.at(x, K, u)`
    and whole-array `x += v` are single C calls that hold the GIL end to
    end, so no update is lost and no element is torn;
  * reads (`x[K]`, `x.copy()`) are single C calls too - each *element* read
    is consistent, while the gathered slice as a whole may interleave with
    concurrent writes (the "inconsistent read" the analysis allows);
  * the shared iteration counter (`itertools.count`) increments exactly
    once per inner iteration.

Iteration order follows the after-read labeling scheme: a worker samples
its component from its own (seed, epoch, thread) stream, performs the
inconsistent read of the support slice, and only then takes its label j
from the counter. Sampling before reading is what a support-restricted
read requires, and the sample is independent of the read, which is all the
labeling argument needs. Workers run until they observe a label >= m, so
an epoch executes between m and m + threads - 1 iterations; iterations
labeled past m still write x but get zero weight in the epoch average.

With one thread every read is consistent and worker 0 consumes exactly the
serial stream, so a 1-thread async run reproduces the serial sparse solver
(checked to 1e-12 in the acceptance suite; the update arithmetic is
bit-identical, the epoch averages differ only in summation order).
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass

import numpy as np

from .data import SparseDataset, compute_feature_stats
from .dense import SolverConfig
from .objectives import (
    Objective,
    evaluate,
    full_gradient_from_margins,
    loss_derivative,
    margins,
    scalar_derivative,
)
from .sparse import resolve_sparse_params
from .streams import epoch_stream
from .traces import EpochClock, EpochTrace, RunResult


@dataclass
class AsyncConfig(SolverConfig):
    """Async solver knobs: epoch-average option and worker count.

    Auto (eta, theta) is the analyzed asynchronous regime eta = 1/(5L),
    theta = 1/6 for both options when sigma > 0.
    """

    option: str = "II"
    threads: int = 1

    def __post_init__(self):
        super().__post_init__()
        if self.option not in ("I", "II"):
            raise ValueError("option must be 'I' or 'II'")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


class SharedIterate:
    """Shared state for one epoch: iterate x, epoch-average accumulator
    xbar, and the iteration counter. See the module docstring for the
    atomicity contract its users rely on."""

    def __init__(self, x: np.ndarray, xbar: np.ndarray | None):
        self.x = x
        self.xbar = xbar
        self._counter = itertools.count()

    def take_label(self) -> int:
        """Next 1-based iteration label; atomic, increments once per call."""
        return next(self._counter) + 1

    def total_taken(self) -> int:
        """Number of labels handed out. Only meaningful after workers join
        (the probe itself consumes a label)."""
        return next(self._counter)


def _check_async_supported(obj: Objective) -> None:
    if obj.reg == "l1":
        raise ValueError(
            "async solvers update x with atomic adds and cannot apply a "
            "soft-threshold prox; use the serial sparse solver for l1"
        )


def _run_workers(threads: int, body) -> None:
    """Run `body(thread_id)` on each of `threads` threads, re-raising the
    first worker exception."""
    if threads == 1:
        body(0)
        return
    errors: list[BaseException] = []

    def wrap(t):
        try:
            body(t)
        except BaseException as e:  # noqa: BLE001 - surfaced after join
            errors.append(e)

    ts = [threading.Thread(target=wrap, args=(t,)) for t in range(threads)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    if errors:
        raise errors[0]


def _resolve_async_params(obj, stats, cfg, m):
    if cfg.eta is not None and cfg.theta is not None:
        return cfg.eta, cfg.theta
    if obj.sigma > 0:
        eta, theta = 1.0 / (5.0 * obj.L), 1.0 / 6.0
    else:
        eta, theta = resolve_sparse_params(obj, stats, m, cfg.option)
    if cfg.eta is not None:
        eta = cfg.eta
    if cfg.theta is not None:
        theta = cfg.theta
    return eta, theta


def async_mig_run(
    obj: Objective,
    ds: SparseDataset,
    x0: np.ndarray,
    cfg: AsyncConfig,
    stats=None,
    stop_below: float | None = None,
) -> RunResult:
    """Asynchronous sparse MiG.

    Option I starts the epoch-average accumulator at zero and adds a full
    inconsistent-read snapshot x_hat/m on every in-budget iteration, then
    restarts the inner iterate from the new anchor. Option II starts the
    accumulator at x and adds each update u scaled by (m + 1 - j)/m on its
    support, keeping the inner iterate across epochs; for one thread the
    accumulator then equals the average of x_1..x_m exactly (in reals).
    """
    _check_async_supported(obj)
    if stats is None:
        stats = compute_feature_stats(ds)
    n, d = ds.n_rows, ds.n_cols
    m = cfg.resolve_m(n)
    eta, theta = _resolve_async_params(obj, stats, cfg, m)

    x = np.array(x0, dtype=np.float64, copy=True)
    xt = x.copy()
    traces = [EpochTrace(0, 0, 0.0, evaluate(obj, ds, x))]
    clock = EpochClock()
    oracle = 0
    b = ds.labels
    offsets = ds.matrix.row_offsets
    colidx = ds.matrix.col_indices
    values = ds.matrix.values
    inv_p = stats.inv_p
    phi = scalar_derivative(obj.loss)
    folded = obj.reg == "l2" and obj.lam > 0
    lam_theta = obj.lam * theta
    opt2 = cfg.option == "II"
    iters_per_epoch: list[int] = []

    for s in range(1, cfg.epochs + 1):
        clock.start()
        zt = margins(ds, xt)
        phit = loss_derivative(obj, zt, b)
        mu = full_gradient_from_margins(obj, ds, zt, threads=cfg.threads)
        if folded:
            mu = mu + obj.lam * xt
        xbar = x.copy() if opt2 else np.zeros(d)
        shared = SharedIterate(x, xbar)
        inv_m = 1.0 / m

        def worker(t, _s=s, _zt=zt, _phit=phit, _mu=mu, _shared=shared):
            stream = epoch_stream(cfg.seed, _s, t)
            xs, xb = _shared.x, _shared.xbar
            while True:
                i = int(stream.integers(0, n))
                lo, hi = offsets[i], offsets[i + 1]
                K = colidx[lo:hi]
                v = values[lo:hi]
                if opt2:
                    xK = xs[K]  # inconsistent read of the support slice
                else:
                    xhat = xs.copy()  # full snapshot for the dense average add
                    xK = xhat[K]
                j = _shared.take_label()  # label taken after the read
                zy = theta * float(v @ xK) + (1.0 - theta) * _zt[i]
                c = phi(zy, b[i]) - _phit[i]
                ipK = inv_p[K]
                if folded:
                    g = c * v + ipK * (lam_theta * (xK - xt[K]) + _mu[K])
                else:
                    g = c * v + ipK * _mu[K]
                u = -eta * g
                np.add.at(xs, K, u)  # atomic per-coordinate add
                if opt2:
                    w = m + 1 - j
                    if w > 0:
                        np.add.at(xb, K, u * (w * inv_m))
                else:
                    if j <= m:
                        xb += xhat * inv_m  # atomic whole-array add
                if j >= m:
                    return

        _run_workers(cfg.threads, worker)
        done = shared.total_taken()
        iters_per_epoch.append(done)
        xt *= 1.0 - theta
        xt += theta * xbar
        if not opt2:
            x[:] = xt
        oracle += n + done
        wall = clock.stop()
        fval = evaluate(obj, ds, xt)
        traces.append(EpochTrace(s, oracle, wall, fval))
        if stop_below is not None and fval <= stop_below:
            break
    return RunResult(
        x=xt,
        traces=traces,
        params={"m": m, "eta": eta, "theta": theta, "threads": cfg.threads,
                "iters_per_epoch": iters_per_epoch},
    )


def kromagnon_run(
    obj: Objective,
    ds: SparseDataset,
    x0: np.ndarray,
    cfg: AsyncConfig,
    stats=None,
    stop_below: float | None = None,
) -> RunResult:
    """Asynchronous sparse SVRG: the theta = 1 estimator (y is the shared
    iterate itself), no epoch average - the new anchor is the shared x at
    the end of the epoch. Default eta = 1/(4L)."""
    _check_async_supported(obj)
    if stats is None:
        stats = compute_feature_stats(ds)
    n, d = ds.n_rows, ds.n_cols
    m = cfg.resolve_m(n)
    eta = cfg.eta if cfg.eta is not None else 1.0 / (4.0 * obj.L)

    x = np.array(x0, dtype=np.float64, copy=True)
    xt = x.copy()
    traces = [EpochTrace(0, 0, 0.0, evaluate(obj, ds, x))]
    clock = EpochClock()
    oracle = 0
    b = ds.labels
    offsets = ds.matrix.row_offsets
    colidx = ds.matrix.col_indices
    values = ds.matrix.values
    inv_p = stats.inv_p
    phi = scalar_derivative(obj.loss)
    folded = obj.reg == "l2" and obj.lam > 0
    lam = obj.lam
    iters_per_epoch: list[int] = []

    for s in range(1, cfg.epochs + 1):
        clock.start()
        zt = margins(ds, xt)
        phit = loss_derivative(obj, zt, b)
        mu = full_gradient_from_margins(obj, ds, zt, threads=cfg.threads)
        if folded:
            mu = mu + lam * xt
        shared = SharedIterate(x, None)

        def worker(t, _s=s, _zt=zt, _phit=phit, _mu=mu, _shared=shared):
            stream = epoch_stream(cfg.seed, _s, t)
            xs = _shared.x
            while True:
                i = int(stream.integers(0, n))
                lo, hi = offsets[i], offsets[i + 1]
                K = colidx[lo:hi]
                v = values[lo:hi]
                xK = xs[K]
                j = _shared.take_label()
                zx = float(v @ xK)
                c = phi(zx, b[i]) - _phit[i]
                ipK = inv_p[K]
                if folded:
                    g = c * v + ipK * (lam * (xK - xt[K]) + _mu[K])
                else:
                    g = c * v + ipK * _mu[K]
                np.add.at(xs, K, -eta * g)
                if j >= m:
                    return

        _run_workers(cfg.threads, worker)
        done = shared.total_taken()
        iters_per_epoch.append(done)
        xt = x.copy()
        oracle += n + done
        wall = clock.stop()
        fval = evaluate(obj, ds, xt)
        traces.append(EpochTrace(s, oracle, wall, fval))
        if stop_below is not None and fval <= stop_below:
            break
    return RunResult(
        x=xt,
        traces=traces,
        params={"m": m, "eta": eta, "threads": cfg.threads,
                "iters_per_epoch": iters_per_epoch},
    )


def asaga_run(
    obj: Objective,
    ds: SparseDataset,
    x0: np.ndarray,
    cfg: AsyncConfig,
    stats=None,
    stop_below: float | None = None,
) -> RunResult:
    """Asynchronous sparse SAGA.

    The gradient table stores one scalar phi' per component; the running
    table average alpha_bar = (1/n) sum_k table_k a_k is kept as a dense
    vector and corrected with atomic adds. The estimator on support K is
    (phi'_new - table_i) v + D_i alpha_bar + lam D_i x_hat, which is
    unbiased and vanishes per-sample at the optimum once the table has
    converged. Default eta = 1/(2 (sigma n + L)); one "epoch" is m steps
    (the table-fill pass charges n oracle calls to the start)."""
    _check_async_supported(obj)
    if stats is None:
        stats = compute_feature_stats(ds)
    n, d = ds.n_rows, ds.n_cols
    m = cfg.resolve_m(n)
    eta = cfg.eta if cfg.eta is not None else 1.0 / (2.0 * (obj.sigma * n + obj.L))

    x = np.array(x0, dtype=np.float64, copy=True)
    traces = [EpochTrace(0, 0, 0.0, evaluate(obj, ds, x))]
    clock = EpochClock()
    b = ds.labels
    offsets = ds.matrix.row_offsets
    colidx = ds.matrix.col_indices
    values = ds.matrix.values
    inv_p = stats.inv_p
    phi = scalar_derivative(obj.loss)
    lam = obj.lam if obj.reg == "l2" else 0.0
    iters_per_epoch: list[int] = []

    clock.start()
    table = np.asarray(loss_derivative(obj, margins(ds, x), b), dtype=np.float64)
    abar = ds.matrix.to_scipy().T.dot(table) / n
    clock.stop()
    oracle = n

    for s in range(1, cfg.epochs + 1):
        clock.start()
        shared = SharedIterate(x, None)

        def worker(t, _s=s, _shared=shared):
            stream = epoch_stream(cfg.seed, _s, t)
            xs = _shared.x
            while True:
                i = int(stream.integers(0, n))
                lo, hi = offsets[i], offsets[i + 1]
                K = colidx[lo:hi]
                v = values[lo:hi]
                xK = xs[K]
                j = _shared.take_label()
                snew = phi(float(v @ xK), b[i])
                sold = float(table[i])
                diff = snew - sold
                ipK = inv_p[K]
                if lam > 0:
                    g = diff * v + ipK * (abar[K] + lam * xK)
                else:
                    g = diff * v + ipK * abar[K]
                np.add.at(xs, K, -eta * g)
                np.add.at(abar, K, (diff / n) * v)
                table[i] = snew
                if j >= m:
                    return

        _run_workers(cfg.threads, worker)
        done = shared.total_taken()
        iters_per_epoch.append(done)
        oracle += done
        wall = clock.stop()
        fval = evaluate(obj, ds, x)
        traces.append(EpochTrace(s, oracle, wall, fval))
        if stop_below is not None and fval <= stop_below:
            break
    return RunResult(
        x=x.copy(),
        traces=traces,
        params={"m": m, "eta": eta, "threads": cfg.threads,
                "iters_per_epoch": iters_per_epoch},
    )
