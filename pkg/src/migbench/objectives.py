"""Finite-sum objectives F(x) = (1/n) sum_i f_i(x) + g(x).

Losses are GLMs, so every component gradient is a scalar derivative times
the data row: grad f_i(x) = phi'(<a_i, x>; b_i) * a_i. Solvers exploit this
to get snapshot-side gradients for free from one matvec per epoch.

Supported losses:
  * ``logistic``:  f_i(x) = log(1 + exp(-b_i <a_i, x>)),  b_i in {-1, +1}
  * ``squared``:   f_i(x) = (<a_i, x> + b_i)^2

Regularizers g: ``l2`` (lam/2 ||x||^2, handled either by prox or folded into
the smooth part with support weighting for the sparse solvers), ``l1``
(lam ||x||_1, prox only), ``none``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import FeatureStats, SparseDataset

LOSSES = ("logistic", "squared")
REGULARIZERS = ("l2", "l1", "none")


@dataclass(frozen=True)
class Objective:
    """Loss/regularizer pair with its smoothness and strong-convexity moduli.

    ``L`` is the largest component smoothness constant; ``sigma`` is the
    strong-convexity modulus of g (= lam for l2, else 0).
    """

    loss: str
    reg: str
    lam: float
    L: float
    sigma: float


def smoothness_constant(loss: str, ds: SparseDataset) -> float:
    """Largest component smoothness constant over the dataset.

    logistic: max ||a_i||^2 / 4;  squared: 2 max ||a_i||^2.
    """
    max_sq = float(ds.matrix.row_sq_norms().max()) if ds.n_rows else 0.0
    if loss == "logistic":
        return 0.25 * max_sq
    if loss == "squared":
        return 2.0 * max_sq
    raise ValueError(f"unknown loss {loss!r}")


def make_objective(ds: SparseDataset, loss: str, reg: str, lam: float) -> Objective:
    """Build an :class:`Objective` for a dataset, validating the combination."""
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    if reg not in REGULARIZERS:
        raise ValueError(f"unknown regularizer {reg!r}")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if reg == "none" and lam != 0:
        raise ValueError("lam must be 0 with reg='none'")
    if loss == "logistic":
        bad = ~np.isin(ds.labels, (-1.0, 1.0))
        if bad.any():
            raise ValueError(
                "logistic loss needs labels in {-1, +1}; "
                f"found {ds.labels[bad][0]!r}"
            )
    L = smoothness_constant(loss, ds)
    sigma = lam if reg == "l2" else 0.0
    if sigma > 0 and L < sigma:
        raise ValueError(
            f"L={L:g} < sigma={sigma:g}: condition number below 1 is out of scope"
        )
    return Objective(loss=loss, reg=reg, lam=lam, L=L, sigma=sigma)


# ---------------------------------------------------------------------------
# scalar loss machinery

def loss_derivative(obj: Objective, z, b):
    """phi'(z; b): the scalar GLM derivative, vectorized over z and b.

    logistic: -b * sigmoid(-b z), evaluated stably for large |z|; squared:
    2 (z + b). Operation order matches :func:`scalar_derivative`; the two
    paths agree to within one ulp (np.exp and math.exp may round the last
    bit differently).
    """
    z = np.asarray(z, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if obj.loss == "logistic":
        t = -b * z
        et = np.exp(-np.abs(t))
        return np.where(t >= 0, -b / (1.0 + et), (-b * et) / (1.0 + et))
    # squared
    return 2.0 * (z + b)


def scalar_derivative(loss: str):
    """Fast scalar phi'(z, b) closure for inner loops.

    Same stable formulas and operation order as :func:`loss_derivative`,
    without numpy dispatch overhead; agreement is within one ulp (math.exp
    vs np.exp). Every solver uses one path consistently per role, so the
    ulp never enters a bitwise-reproducibility contract.
    """
    if loss == "logistic":
        def phi(z: float, b: float) -> float:
            t = -b * z
            et = math.exp(-abs(t))
            if t >= 0:
                return -b / (1.0 + et)
            return -b * et / (1.0 + et)
        return phi
    if loss == "squared":
        def phi(z: float, b: float) -> float:
            return 2.0 * (z + b)
        return phi
    raise ValueError(f"unknown loss {loss!r}")


def _loss_values(obj: Objective, z: np.ndarray, b: np.ndarray) -> np.ndarray:
    if obj.loss == "logistic":
        t = -b * z
        # log(1 + e^t) = max(t, 0) + log1p(e^{-|t|})
        return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))
    r = z + b
    return r * r


def margins(ds: SparseDataset, x: np.ndarray) -> np.ndarray:
    """<a_i, x> for every row, via one CSR matvec."""
    return ds.matrix.to_scipy().dot(x)


# ---------------------------------------------------------------------------
# gradients

def sample_gradient(obj: Objective, ds: SparseDataset, i: int, x_support: np.ndarray) -> np.ndarray:
    """grad f_i restricted to the support of row i.

    ``x_support`` is the iterate restricted to row i's support (callers with
    a dense x pass ``x[cols]``). Returns an array of the same length.
    """
    cols, vals = ds.row(i)
    z = float(vals @ x_support)
    return loss_derivative(obj, z, ds.labels[i]) * vals


def regularized_sparse_gradient(
    obj: Objective, ds: SparseDataset, stats: FeatureStats, i: int, x_support: np.ndarray
) -> np.ndarray:
    """Component gradient with the l2 term folded in under support weighting.

    For l2, component k of row i's gradient gains lam * x_k / p_k, so that
    the expectation over i recovers the full regularized gradient. For l1 or
    no regularizer this is just :func:`sample_gradient` (the regularizer
    lives in the prox).
    """
    g = sample_gradient(obj, ds, i, x_support)
    if obj.reg == "l2" and obj.lam > 0:
        cols, _ = ds.row(i)
        g = g + obj.lam * stats.inv_p[cols] * x_support
    return g


def full_gradient(obj: Objective, ds: SparseDataset, x: np.ndarray, threads: int = 1) -> np.ndarray:
    """grad f(x) = (1/n) A^T phi'(Ax), without the regularizer.

    With ``threads > 1`` the row range is split into that many contiguous
    chunks whose partial results are summed in chunk order, so the result is
    reproducible at a given thread count.
    """
    z = margins(ds, x)
    return full_gradient_from_margins(obj, ds, z, threads)


def full_gradient_from_margins(
    obj: Objective, ds: SparseDataset, z: np.ndarray, threads: int = 1
) -> np.ndarray:
    """Same as :func:`full_gradient` given precomputed margins."""
    n = ds.n_rows
    w = loss_derivative(obj, z, ds.labels)
    A = ds.matrix.to_scipy()
    if threads <= 1 or n < 2 * threads:
        return A.T.dot(w) / n
    bounds = np.linspace(0, n, threads + 1).astype(int)
    def part(k):
        lo, hi = bounds[k], bounds[k + 1]
        return A[lo:hi].T.dot(w[lo:hi])
    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(part, range(threads)))
    total = parts[0]
    for p in parts[1:]:  # fixed order: deterministic for a given thread count
        total = total + p
    return total / n


# ---------------------------------------------------------------------------
# objective values

def loss_value(obj: Objective, ds: SparseDataset, x: np.ndarray) -> float:
    """The smooth part f(x) = (1/n) sum_i f_i(x), regularizer excluded."""
    z = margins(ds, x)
    return float(_loss_values(obj, z, ds.labels).mean())


def reg_value(obj: Objective, x: np.ndarray) -> float:
    if obj.reg == "l2":
        return 0.5 * obj.lam * float(x @ x)
    if obj.reg == "l1":
        return obj.lam * float(np.abs(x).sum())
    return 0.0


def evaluate(obj: Objective, ds: SparseDataset, x: np.ndarray) -> float:
    """F(x) = f(x) + g(x)."""
    return loss_value(obj, ds, x) + reg_value(obj, x)


# ---------------------------------------------------------------------------
# proximal steps

def soft_threshold(u: np.ndarray, t: float) -> np.ndarray:
    return np.sign(u) * np.maximum(np.abs(u) - t, 0.0)


def prox(obj: Objective, u: np.ndarray, eta: float) -> np.ndarray:
    """prox_{eta g}(u), closed form for every supported regularizer."""
    if obj.reg == "l2":
        return u / (1.0 + eta * obj.lam)
    if obj.reg == "l1":
        return soft_threshold(u, eta * obj.lam)
    return u


def prox_step(obj: Objective, x: np.ndarray, g: np.ndarray, eta: float) -> np.ndarray:
    """One proximal gradient step: prox_{eta g}(x - eta g)."""
    return prox(obj, x - eta * g, eta)
