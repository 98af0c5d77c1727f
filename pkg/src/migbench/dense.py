"""Serial dense solvers: MiG (strongly convex and general convex variants),
SVRG and SAGA baselines.

MiG keeps a single running iterate x and never materializes the coupling
point y_{j-1} = theta * x_{j-1} + (1-theta) * snapshot: each inner step only
needs <a_i, y>, which is a convex combination of <a_i, x> and the cached
snapshot margin. The epoch output is the omega-weighted average of the
inner iterates with omega = 1 + eta * sigma, and the inner iterate carries
over to the next epoch unchanged.

Oracle accounting: one epoch costs n + m component-gradient evaluations -
the full pass for the epoch anchor plus one fresh gradient per inner step
(the anchor-side scalar phi'(<a_i, snapshot>) is reconstructed from the
margins cached during the full pass, not re-evaluated).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import SparseDataset
from .objectives import (
    Objective,
    evaluate,
    full_gradient_from_margins,
    loss_derivative,
    margins,
    prox,
)
from .streams import epoch_stream
from .traces import EpochClock, EpochTrace, RunResult

# running omega-weights are renormalized past this to avoid float overflow
# in the m >> kappa regime (pure rescaling of numerator and denominator)
_WEIGHT_CAP = 1e280


@dataclass
class SolverConfig:
    """Common solver knobs. ``None`` for m/eta/theta means "resolve
    automatically": m = 2n, (eta, theta) from the solver's theory preset."""

    epochs: int = 20
    m: int | None = None
    eta: float | None = None
    theta: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be >= 1")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.theta is not None and not 0 < self.theta <= 1:
            raise ValueError("theta must be in (0, 1]")

    def resolve_m(self, n: int) -> int:
        return self.m if self.m is not None else 2 * n


def theoretical_params_sc(L: float, sigma: float, m: int) -> tuple[float, float]:
    """(eta, theta) for strongly convex MiG as a function of (L, sigma, m).

    Two regimes split at m/kappa = 3/4 with kappa = L/sigma:
      m/kappa <= 3/4:  eta = sqrt(1/(3 sigma m L)),  theta = sqrt(m/(3 kappa))
      m/kappa  > 3/4:  eta = 2/(3L),                 theta = 1/2
    Both satisfy the coupling condition L*theta*(1 + 1/(1-theta)) <= 1/eta.
    """
    if L <= 0 or m < 1:
        raise ValueError("need L > 0 and m >= 1")
    if sigma <= 0:
        raise ValueError(
            "theoretical_params_sc needs sigma > 0; use the general convex "
            "solver (mig_nsc_run) or pass eta/theta explicitly"
        )
    kappa = L / sigma
    if m / kappa <= 0.75:
        return math.sqrt(1.0 / (3.0 * sigma * m * L)), math.sqrt(m / (3.0 * kappa))
    return 2.0 / (3.0 * L), 0.5


def weighted_epoch_average(
    xs: list[np.ndarray], x_prev: np.ndarray, theta: float, omega: float
) -> np.ndarray:
    """Materialized epoch average:
    theta * (sum_j omega^j xs[j]) / (sum_j omega^j) + (1 - theta) * x_prev,
    with xs = [x_1, ..., x_m] weighted omega^0 ... omega^{m-1}.

    Used directly in identity tests; the solvers maintain the same quantity
    as a running sum.
    """
    if not xs:
        raise ValueError("need at least one inner iterate")
    w = omega ** np.arange(len(xs), dtype=np.float64)
    avg = sum(wj * xj for wj, xj in zip(w, xs)) / w.sum()
    return theta * avg + (1.0 - theta) * x_prev


def _trace0(obj, ds, x, traces):
    traces.append(EpochTrace(epoch=0, oracle_calls=0, wall_ms=0.0,
                             objective=evaluate(obj, ds, x)))


def mig_sc_run(obj: Objective, ds: SparseDataset, x0: np.ndarray, cfg: SolverConfig) -> RunResult:
    """MiG for strongly convex objectives (sigma > 0 required for auto params)."""
    n, d = ds.n_rows, ds.n_cols
    m = cfg.resolve_m(n)
    if cfg.eta is None or cfg.theta is None:
        eta, theta = theoretical_params_sc(obj.L, obj.sigma, m)
        if cfg.eta is not None:
            eta = cfg.eta
        if cfg.theta is not None:
            theta = cfg.theta
    else:
        eta, theta = cfg.eta, cfg.theta
    omega = 1.0 + eta * obj.sigma

    x = np.array(x0, dtype=np.float64, copy=True)
    xt = x.copy()  # the epoch anchor (snapshot)
    traces: list[EpochTrace] = []
    _trace0(obj, ds, x, traces)
    clock = EpochClock()
    oracle = 0
    b = ds.labels

    for s in range(1, cfg.epochs + 1):
        clock.start()
        zt = margins(ds, xt)
        phit = loss_derivative(obj, zt, b)
        mu = full_gradient_from_margins(obj, ds, zt)
        eta_mu = eta * mu
        idx = epoch_stream(cfg.seed, s).integers(0, n, size=m)

        wsum = np.zeros(d)
        wtot = 0.0
        w = 1.0
        for i in idx:
            cols, vals = ds.row(i)
            zy = theta * float(vals @ x[cols]) + (1.0 - theta) * zt[i]
            c = eta * (float(loss_derivative(obj, zy, b[i])) - phit[i])
            u = x - eta_mu
            u[cols] -= c * vals
            u = prox(obj, u, eta)
            wsum += w * u
            wtot += w
            if w > _WEIGHT_CAP:
                wsum /= w
                wtot /= w
                w = 1.0
            w *= omega
            x = u
        xt = theta * (wsum / wtot) + (1.0 - theta) * xt
        oracle += n + m
        wall = clock.stop()
        traces.append(EpochTrace(s, oracle, wall, evaluate(obj, ds, xt)))
    return RunResult(x=xt, traces=traces,
                     params={"m": m, "eta": eta, "theta": theta, "omega": omega})


def mig_nsc_run(obj: Objective, ds: SparseDataset, x0: np.ndarray, cfg: SolverConfig) -> RunResult:
    """MiG for general convex objectives: per-epoch theta_s = 2/(s+4),
    eta_s = 1/(4 L theta_s), plain (uniform) epoch averaging."""
    n, d = ds.n_rows, ds.n_cols
    m = cfg.resolve_m(n)
    if cfg.eta is not None or cfg.theta is not None:
        raise ValueError("mig_nsc_run derives eta/theta per epoch; leave them unset")

    x = np.array(x0, dtype=np.float64, copy=True)
    xt = x.copy()
    traces: list[EpochTrace] = []
    _trace0(obj, ds, x, traces)
    clock = EpochClock()
    oracle = 0
    b = ds.labels
    thetas = []

    for s in range(1, cfg.epochs + 1):
        theta = 2.0 / (s + 4.0)
        eta = 1.0 / (4.0 * obj.L * theta)
        thetas.append(theta)
        clock.start()
        zt = margins(ds, xt)
        phit = loss_derivative(obj, zt, b)
        mu = full_gradient_from_margins(obj, ds, zt)
        eta_mu = eta * mu
        idx = epoch_stream(cfg.seed, s).integers(0, n, size=m)

        usum = np.zeros(d)
        for i in idx:
            cols, vals = ds.row(i)
            zy = theta * float(vals @ x[cols]) + (1.0 - theta) * zt[i]
            c = eta * (float(loss_derivative(obj, zy, b[i])) - phit[i])
            u = x - eta_mu
            u[cols] -= c * vals
            u = prox(obj, u, eta)
            usum += u
            x = u
        xt = theta * (usum / m) + (1.0 - theta) * xt
        oracle += n + m
        wall = clock.stop()
        traces.append(EpochTrace(s, oracle, wall, evaluate(obj, ds, xt)))
    return RunResult(x=xt, traces=traces, params={"m": m, "thetas": thetas})


def svrg_run(obj: Objective, ds: SparseDataset, x0: np.ndarray, cfg: SolverConfig) -> RunResult:
    """Prox-SVRG baseline; default eta = 1/(4L), snapshot = last inner iterate."""
    n, d = ds.n_rows, ds.n_cols
    m = cfg.resolve_m(n)
    eta = cfg.eta if cfg.eta is not None else 1.0 / (4.0 * obj.L)

    x = np.array(x0, dtype=np.float64, copy=True)
    xt = x.copy()
    traces: list[EpochTrace] = []
    _trace0(obj, ds, x, traces)
    clock = EpochClock()
    oracle = 0
    b = ds.labels

    for s in range(1, cfg.epochs + 1):
        clock.start()
        zt = margins(ds, xt)
        phit = loss_derivative(obj, zt, b)
        mu = full_gradient_from_margins(obj, ds, zt)
        eta_mu = eta * mu
        idx = epoch_stream(cfg.seed, s).integers(0, n, size=m)
        for i in idx:
            cols, vals = ds.row(i)
            zx = float(vals @ x[cols])
            c = eta * (float(loss_derivative(obj, zx, b[i])) - phit[i])
            u = x - eta_mu
            u[cols] -= c * vals
            x = prox(obj, u, eta)
        xt = x.copy()
        oracle += n + m
        wall = clock.stop()
        traces.append(EpochTrace(s, oracle, wall, evaluate(obj, ds, xt)))
    return RunResult(x=xt, traces=traces, params={"m": m, "eta": eta})


def saga_run(obj: Objective, ds: SparseDataset, x0: np.ndarray, cfg: SolverConfig) -> RunResult:
    """SAGA baseline; default eta = 1/(2(sigma n + L)).

    The gradient table stores one scalar phi' per component (GLM structure),
    initialized with the gradients at x0 (n oracle calls, charged to the
    first epoch). An "epoch" is m inner steps for trace comparability.
    """
    n, d = ds.n_rows, ds.n_cols
    m = cfg.resolve_m(n)
    eta = cfg.eta if cfg.eta is not None else 1.0 / (2.0 * (obj.sigma * n + obj.L))

    x = np.array(x0, dtype=np.float64, copy=True)
    traces: list[EpochTrace] = []
    _trace0(obj, ds, x, traces)
    clock = EpochClock()
    b = ds.labels

    clock.start()
    table = np.asarray(loss_derivative(obj, margins(ds, x), b), dtype=np.float64)
    avg = ds.matrix.to_scipy().T.dot(table) / n  # (1/n) sum_i table_i * a_i
    clock.stop()
    oracle = n

    for s in range(1, cfg.epochs + 1):
        clock.start()
        idx = epoch_stream(cfg.seed, s).integers(0, n, size=m)
        for i in idx:
            cols, vals = ds.row(i)
            znew = float(vals @ x[cols])
            pnew = float(loss_derivative(obj, znew, b[i]))
            diff = pnew - table[i]
            u = x - eta * avg
            u[cols] -= (eta * diff) * vals
            x = prox(obj, u, eta)
            avg[cols] += (diff / n) * vals
            table[i] = pnew
        oracle += m
        wall = clock.stop()
        traces.append(EpochTrace(s, oracle, wall, evaluate(obj, ds, x)))
    return RunResult(x=x, traces=traces, params={"m": m, "eta": eta})
