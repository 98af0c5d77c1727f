"""Serial sparse MiG: support-restricted inner steps with probability
reweighting, lazy epoch averaging, and an optional restart schedule.

Each inner step touches only the support T_i of the sampled row. The
variance-reduction anchor term is reweighted per coordinate by 1/p_k (the
inverse appearance probability), which keeps the estimator unbiased:
E_i[P_i D mu] = mu. The l2 regularizer is folded into the smooth part with
the same weighting (component k of row i's gradient gains lam * x_k / p_k),
so every update stays support-restricted and no prox is applied. l1 is
rejected: a nonsmooth term has no such folding, and thresholding only the
touched coordinates would converge to a biased fixed point. Use the dense
solvers for l1 problems.

Two epoch-average windows:
  * Option I  averages x_0 .. x_{m-1} and restarts the inner iterate from
    the new anchor;
  * Option II averages x_1 .. x_m and keeps the inner iterate.
The average is never materialized: a per-coordinate last-touched timestamp
turns it into O(nnz) bookkeeping per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import FeatureStats, SparseDataset, compute_feature_stats
from .dense import SolverConfig, theoretical_params_sc
from .objectives import (
    Objective,
    evaluate,
    full_gradient_from_margins,
    loss_derivative,
    margins,
    scalar_derivative,
)
from .streams import epoch_stream
from .traces import EpochClock, EpochTrace, RunResult


@dataclass
class SparseSolverConfig(SolverConfig):
    """Adds the epoch-average option and the restart schedule.

    ``restart_every``: None (never restart; the default, and all Option I
    runs ignore the field), an explicit epoch count, or "auto" for the
    theory-derived period of :func:`restart_period`.
    """

    option: str = "II"
    restart_every: int | str | None = None

    def __post_init__(self):
        super().__post_init__()
        if self.option not in ("I", "II"):
            raise ValueError("option must be 'I' or 'II'")
        if isinstance(self.restart_every, int) and self.restart_every < 1:
            raise ValueError("restart_every must be >= 1")
        if isinstance(self.restart_every, str) and self.restart_every != "auto":
            raise ValueError("restart_every must be an int, None or 'auto'")


def _check_sparse_supported(obj: Objective) -> None:
    if obj.reg not in ("l2", "none"):
        raise ValueError(
            "sparse solver supports only l2 or no regularization (the "
            "regularizer is folded into the smooth part; there is no "
            "support-restricted prox): use a dense solver for l1"
        )


@dataclass
class SparseState:
    """Mutable state threaded through :func:`sparse_mig_epoch`."""

    x: np.ndarray
    xt: np.ndarray
    acc: np.ndarray = field(init=False)
    last: np.ndarray = field(init=False)
    sampled: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        d = self.x.size
        self.acc = np.zeros(d)
        self.last = np.zeros(d, dtype=np.int64)


def resolve_sparse_params(
    obj: Objective, stats: FeatureStats, m: int, option: str
) -> tuple[float, float]:
    """Default (eta, theta) for the sparse solver.

    Option I uses the analyzed regime eta = 1/L, theta = 1/10. Option II is
    regime-aware for sigma > 0: the dense theory pair when m/kappa <= 3/4,
    otherwise theta = (zeta + 1/2)/(zeta + 1) with zeta = d_max^2 - d_max
    and eta = (1 - theta)/(2 m sigma theta). With sigma = 0 (where the
    sparse theory does not apply) both options fall back to the practical
    eta = 1/(4L), theta = 1/2.
    """
    if obj.sigma <= 0:
        return 1.0 / (4.0 * obj.L), 0.5
    if option == "I":
        return 1.0 / obj.L, 0.1
    kappa = obj.L / obj.sigma
    if m / kappa <= 0.75:
        return theoretical_params_sc(obj.L, obj.sigma, m)
    zeta = stats.d_max * stats.d_max - stats.d_max
    theta = (zeta + 0.5) / (zeta + 1.0)
    eta = (1.0 - theta) / (2.0 * m * obj.sigma * theta)
    return eta, theta


def restart_period(theta: float, zeta: float, eta: float, m: int, sigma: float) -> int:
    """Restart period S = ceil(2 ((1-theta)(1+zeta) + theta/(eta m sigma))
    / (theta + zeta*theta - zeta)), floored at 1.

    Requires theta (1 + zeta) > zeta, i.e. a positive denominator;
    otherwise the averaged-anchor restart does not contract and this raises.
    """
    if sigma <= 0 or eta <= 0 or m < 1:
        raise ValueError("need sigma > 0, eta > 0, m >= 1")
    denom = theta + zeta * theta - zeta
    if denom <= 0:
        raise ValueError(
            f"restart condition theta(1+zeta) > zeta violated "
            f"(theta={theta:g}, zeta={zeta:g})"
        )
    num = 2.0 * ((1.0 - theta) * (1.0 + zeta) + theta / (eta * m * sigma))
    return max(1, math.ceil(num / denom))


def sparse_estimator(
    obj: Objective,
    ds: SparseDataset,
    stats: FeatureStats,
    i: int,
    x: np.ndarray,
    xt: np.ndarray,
    mu: np.ndarray,
    theta: float,
) -> tuple[np.ndarray, np.ndarray]:
    """(support, estimator-on-support) for one sampled component.

    The estimator is grad f_i(y) - grad f_i(xt) + P_i D mu with
    y = theta x + (1-theta) xt, all restricted to T_i; for l2 the folded
    regularizer contributes lam * theta * (x_k - xt_k)/p_k on the support
    (the y-vs-anchor difference of the folded terms).
    """
    _check_sparse_supported(obj)
    cols, vals = ds.row(i)
    xK = x[cols]
    xtK = xt[cols]
    zy = theta * float(vals @ xK) + (1.0 - theta) * float(vals @ xtK)
    c = float(loss_derivative(obj, zy, ds.labels[i])) - float(
        loss_derivative(obj, float(vals @ xtK), ds.labels[i])
    )
    g = c * vals + stats.inv_p[cols] * mu[cols]
    if obj.reg == "l2" and obj.lam > 0:
        g = g + (obj.lam * theta) * stats.inv_p[cols] * (xK - xtK)
    return cols, g


def sparse_mig_epoch(
    obj: Objective,
    ds: SparseDataset,
    stats: FeatureStats,
    state: SparseState,
    cfg: SparseSolverConfig,
    epoch: int,
    eta: float,
    theta: float,
    m: int,
) -> None:
    """Run one epoch in place: m support-restricted steps, then the lazily
    accumulated epoch average becomes the new anchor."""
    _check_sparse_supported(obj)
    n = ds.n_rows
    x, xt, acc, last = state.x, state.xt, state.acc, state.last
    acc[:] = 0.0
    last[:] = 0
    b = ds.labels
    phi = scalar_derivative(obj.loss)
    folded = obj.reg == "l2" and obj.lam > 0
    lam_theta = obj.lam * theta
    inv_p = stats.inv_p
    opt2 = cfg.option == "II"

    zt = margins(ds, xt)
    phit = loss_derivative(obj, zt, b)
    mu = full_gradient_from_margins(obj, ds, zt)
    if folded:
        mu = mu + obj.lam * xt  # anchor gradient of the folded objective
    stream = epoch_stream(cfg.seed, epoch, 0)
    sampled = np.empty(m, dtype=np.int64)

    for j in range(1, m + 1):
        i = int(stream.integers(0, n))
        sampled[j - 1] = i
        lo = ds.matrix.row_offsets[i]
        hi = ds.matrix.row_offsets[i + 1]
        cols = ds.matrix.col_indices[lo:hi]
        vals = ds.matrix.values[lo:hi]
        xK = x[cols]
        zy = theta * float(vals @ xK) + (1.0 - theta) * zt[i]
        c = phi(zy, b[i]) - phit[i]
        ipK = inv_p[cols]
        if folded:
            g = c * vals + ipK * (lam_theta * (xK - xt[cols]) + mu[cols])
        else:
            g = c * vals + ipK * mu[cols]
        xnew = xK - eta * g
        # lazy average: credit the outgoing values for the steps they covered
        lastK = last[cols]
        if opt2:
            acc[cols] += xK * (j - np.maximum(lastK, 1))
        else:
            acc[cols] += xK * (j - lastK)
        last[cols] = j
        x[cols] = xnew
    # flush coordinates not touched since their last update
    if opt2:
        acc += x * (m - np.maximum(last, 1) + 1)
    else:
        acc += x * (m - last)
    xt *= 1.0 - theta
    xt += (theta / m) * acc
    if not opt2:
        x[:] = xt
    state.sampled.append(sampled)


def sparse_mig_run(
    obj: Objective,
    ds: SparseDataset,
    x0: np.ndarray,
    cfg: SparseSolverConfig,
    stats: FeatureStats | None = None,
) -> RunResult:
    """Serial sparse MiG over ``cfg.epochs`` epochs.

    Option II runs the restart schedule when ``restart_every`` is set: after
    every S epochs the inner iterate and anchor both restart from the mean
    of the block's anchors. RNG streams stay keyed by the global epoch
    index, so a restart changes the iterates, not the sample sequence.
    """
    _check_sparse_supported(obj)
    if stats is None:
        stats = compute_feature_stats(ds)
    n, d = ds.n_rows, ds.n_cols
    m = cfg.resolve_m(n)
    if cfg.eta is None or cfg.theta is None:
        eta, theta = resolve_sparse_params(obj, stats, m, cfg.option)
        if cfg.eta is not None:
            eta = cfg.eta
        if cfg.theta is not None:
            theta = cfg.theta
    else:
        eta, theta = cfg.eta, cfg.theta

    restart: int | None = None
    if cfg.option == "II" and cfg.restart_every is not None:
        if cfg.restart_every == "auto":
            zeta = stats.d_max * stats.d_max - stats.d_max
            restart = restart_period(theta, zeta, eta, m, obj.sigma)
        else:
            restart = cfg.restart_every

    state = SparseState(
        x=np.array(x0, dtype=np.float64, copy=True),
        xt=np.array(x0, dtype=np.float64, copy=True),
    )
    traces: list[EpochTrace] = [
        EpochTrace(0, 0, 0.0, evaluate(obj, ds, state.x))
    ]
    clock = EpochClock()
    oracle = 0
    block_sum = np.zeros(d)
    block_n = 0

    for s in range(1, cfg.epochs + 1):
        clock.start()
        sparse_mig_epoch(obj, ds, stats, state, cfg, s, eta, theta, m)
        if restart is not None:
            block_sum += state.xt
            block_n += 1
            if block_n == restart:
                anchor = block_sum / block_n
                state.x[:] = anchor
                state.xt[:] = anchor
                block_sum[:] = 0.0
                block_n = 0
        oracle += n + m
        wall = clock.stop()
        traces.append(EpochTrace(s, oracle, wall, evaluate(obj, ds, state.xt)))
    return RunResult(
        x=state.xt,
        traces=traces,
        params={"m": m, "eta": eta, "theta": theta, "restart_every": restart,
                "sampled": state.sampled},
    )
