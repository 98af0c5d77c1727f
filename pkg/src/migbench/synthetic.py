"""Synthetic sparse instances with controlled size, sparsity and noise."""

from __future__ import annotations

import numpy as np

from .data import SparseDataset, SparseMatrix, normalize_rows


def generate_synthetic(
    n: int,
    d: int,
    nnz: int,
    noise: float,
    seed: int,
    task: str = "classification",
) -> SparseDataset:
    """Draw a dataset with n rows, d columns and exactly nnz entries per row.

    Supports are uniform without replacement, values standard normal, and
    every row is normalized to unit l2 norm. Labels come from a hidden unit
    vector w: sign(<a_i, w> + noise * eps_i) for classification (sign 0 maps
    to +1), or the real value <a_i, w> + noise * eps_i for regression, with
    eps_i standard normal. Deterministic in ``seed``.
    """
    if not 1 <= nnz <= d:
        raise ValueError("need 1 <= nnz <= d")
    if n < 1:
        raise ValueError("need n >= 1")
    if task not in ("classification", "regression"):
        raise ValueError(f"unknown task {task!r}")
    rng = np.random.default_rng(seed)
    cols = np.empty(n * nnz, dtype=np.int64)
    for i in range(n):
        support = np.sort(rng.choice(d, size=nnz, replace=False))
        cols[i * nnz : (i + 1) * nnz] = support
    vals = rng.standard_normal(n * nnz)
    offsets = np.arange(0, (n + 1) * nnz, nnz, dtype=np.int64)
    matrix = SparseMatrix(
        row_offsets=offsets, col_indices=cols, values=vals, n_rows=n, n_cols=d
    )
    w = rng.standard_normal(d)
    w /= np.linalg.norm(w)
    normed = normalize_rows(SparseDataset(matrix=matrix, labels=np.zeros(n)))
    margins = normed.matrix.to_scipy().dot(w)
    raw = margins + noise * rng.standard_normal(n)
    if task == "classification":
        labels = np.where(raw >= 0, 1.0, -1.0)
    else:
        labels = raw
    return SparseDataset(matrix=normed.matrix, labels=labels, normalized=True)
