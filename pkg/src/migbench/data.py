"""Sparse datasets in CSR layout: parsing, normalization, feature statistics.

The on-disk format is the plain LibSVM/svmlight text format::

    <label> <index>:<value> <index>:<value> ...

with 1-based, strictly increasing indices per line. Rows may be empty
(label only). Parsing is strict: malformed tokens, non-numeric values and
non-ascending indices raise :class:`ParseError` carrying the 1-based line
number.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse


class ParseError(ValueError):
    """Raised on malformed input; ``line`` is the 1-based source line."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(eq=False)
class SparseMatrix:
    """CSR triple (row_offsets, col_indices, values) with explicit shape.

    Invariants, checked at construction time:

    * ``row_offsets`` has length ``n_rows + 1``, starts at 0, ends at nnz,
      and is non-decreasing;
    * ``col_indices`` lie in ``[0, n_cols)`` and are strictly increasing
      within each row (no duplicate coordinates in a row);
    * ``values`` are finite float64.
    """

    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    n_rows: int
    n_cols: int
    _csr: scipy.sparse.csr_matrix | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.row_offsets = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        self.col_indices = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.row_offsets.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != self.col_indices.size:
            raise ValueError("row_offsets must start at 0 and end at nnz")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if self.col_indices.size != self.values.size:
            raise ValueError("col_indices and values must have equal length")
        if self.col_indices.size:
            if self.col_indices.min() < 0 or self.col_indices.max() >= self.n_cols:
                raise ValueError("column index out of range")
            # strictly increasing within each row: diffs may only be <= 0 at
            # row boundaries
            d = np.diff(self.col_indices)
            starts = self.row_offsets[1:-1] - 1  # positions of last element of each row in d
            bad = d <= 0
            bad[starts[(starts >= 0) & (starts < d.size)]] = False
            if np.any(bad):
                raise ValueError("col_indices must be strictly increasing within each row")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")

    @property
    def nnz(self) -> int:
        return int(self.col_indices.size)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Views of (col_indices, values) for row ``i``."""
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[lo:hi], self.values[lo:hi]

    def row_sq_norms(self) -> np.ndarray:
        """Squared l2 norm of every row, length n_rows."""
        cs = np.concatenate(([0.0], np.cumsum(self.values * self.values)))
        return cs[self.row_offsets[1:]] - cs[self.row_offsets[:-1]]

    def to_scipy(self) -> scipy.sparse.csr_matrix:
        """scipy CSR view sharing this matrix's arrays (built lazily)."""
        if self._csr is None:
            self._csr = scipy.sparse.csr_matrix(
                (self.values, self.col_indices, self.row_offsets),
                shape=(self.n_rows, self.n_cols),
            )
        return self._csr

    def equals(self, other: "SparseMatrix") -> bool:
        return (
            self.n_rows == other.n_rows
            and self.n_cols == other.n_cols
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )


@dataclass(eq=False)
class SparseDataset:
    """A design matrix with labels and a row-normalization flag."""

    matrix: SparseMatrix
    labels: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        if self.labels.shape != (self.matrix.n_rows,):
            raise ValueError("labels must have length n_rows")

    @property
    def n_rows(self) -> int:
        return self.matrix.n_rows

    @property
    def n_cols(self) -> int:
        return self.matrix.n_cols

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.matrix.row(i)

    def equals(self, other: "SparseDataset") -> bool:
        return (
            self.matrix.equals(other.matrix)
            and np.array_equal(self.labels, other.labels)
            and self.normalized == other.normalized
        )


@dataclass
class FeatureStats:
    """Per-coordinate appearance statistics used by the sparse solvers.

    ``p[k]`` is the fraction of rows whose support contains coordinate k.
    ``inv_p[k] = 1/p[k]`` on used coordinates and NaN on coordinates that
    appear in no row (NaN rather than 0 so that accidental arithmetic with
    an unused coordinate is loud instead of silently wrong). ``d_max`` is
    the largest inverse probability over used coordinates (1.0 when the
    dataset has no used coordinates at all) and ``delta`` the largest p.
    """

    p: np.ndarray
    inv_p: np.ndarray
    used: np.ndarray
    d_max: float
    delta: float


def parse_libsvm(text: str | bytes, n_cols: int | None = None) -> SparseDataset:
    """Parse LibSVM-format text into a :class:`SparseDataset`.

    Parameters
    ----------
    text : str or bytes
        The file contents. Blank lines are skipped.
    n_cols : int, optional
        Override the inferred column count upward (useful when a test split
        does not touch the trailing features of its train split). It is an
        error to pass a value smaller than the largest index present.

    Stored indices are converted to 0-based. Raises :class:`ParseError` with
    the offending 1-based line number on malformed input.
    """
    if isinstance(text, bytes):
        text = text.decode("ascii")
    labels: list[float] = []
    offsets: list[int] = [0]
    cols: list[int] = []
    vals: list[float] = []
    max_col = 0  # 1-based
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError:
            raise ParseError(f"non-numeric label {tokens[0]!r}", lineno) from None
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"malformed feature token {tok!r}", lineno)
            try:
                idx = int(idx_s)
            except ValueError:
                raise ParseError(f"non-integer feature index in {tok!r}", lineno) from None
            try:
                val = float(val_s)
            except ValueError:
                raise ParseError(f"non-numeric feature value in {tok!r}", lineno) from None
            if idx < 1:
                raise ParseError(f"feature index {idx} must be >= 1", lineno)
            if idx <= prev:
                raise ParseError(
                    f"non-ascending feature index {idx} after {prev}", lineno
                )
            prev = idx
            cols.append(idx - 1)
            vals.append(val)
        offsets.append(len(cols))
        max_col = max(max_col, prev)
    inferred = max_col
    if n_cols is None:
        n_cols = inferred
    elif n_cols < inferred:
        raise ValueError(
            f"n_cols override {n_cols} is smaller than largest index {inferred}"
        )
    matrix = SparseMatrix(
        row_offsets=np.asarray(offsets, dtype=np.int64),
        col_indices=np.asarray(cols, dtype=np.int64),
        values=np.asarray(vals, dtype=np.float64),
        n_rows=len(labels),
        n_cols=n_cols,
    )
    return SparseDataset(matrix=matrix, labels=np.asarray(labels), normalized=False)


def serialize_libsvm(ds: SparseDataset) -> str:
    """Write a dataset back to LibSVM text (1-based indices).

    Floats are written with ``repr`` so that ``parse_libsvm(serialize_libsvm(ds))``
    round-trips bit-for-bit. Trailing all-zero columns are not representable
    in the format; pass ``n_cols=ds.n_cols`` when re-parsing such a dataset.
    """
    out: list[str] = []
    m = ds.matrix
    for i in range(ds.n_rows):
        cols, vals = m.row(i)
        parts = [repr(float(ds.labels[i]))]
        parts.extend(f"{int(c) + 1}:{float(v)!r}" for c, v in zip(cols, vals))
        out.append(" ".join(parts))
    return "\n".join(out) + ("\n" if out else "")


def normalize_rows(ds: SparseDataset) -> SparseDataset:
    """Scale every nonempty row to unit l2 norm; returns a new dataset.

    Rows whose norm is already within 1e-12 of 1 are left byte-identical,
    which makes the operation exactly idempotent. Empty rows are unchanged.
    """
    m = ds.matrix
    norms = np.sqrt(m.row_sq_norms())
    scale = np.ones_like(norms)
    nonempty = np.diff(m.row_offsets) > 0
    needs = nonempty & (np.abs(norms - 1.0) > 1e-12)
    # rows of all-zero values would divide by zero; leave them alone too
    needs &= norms > 0
    scale[needs] = 1.0 / norms[needs]
    values = m.values * np.repeat(scale, np.diff(m.row_offsets))
    matrix = SparseMatrix(
        row_offsets=m.row_offsets.copy(),
        col_indices=m.col_indices.copy(),
        values=values,
        n_rows=m.n_rows,
        n_cols=m.n_cols,
    )
    return SparseDataset(matrix=matrix, labels=ds.labels.copy(), normalized=True)


def compute_feature_stats(ds: SparseDataset) -> FeatureStats:
    """Appearance probabilities p_k and inverse weights for the sparse solvers.

    Because column indices are unique within a row, a bincount of
    ``col_indices`` counts the number of rows containing each coordinate.
    """
    if ds.n_rows < 1:
        raise ValueError("feature stats need at least one row")
    counts = np.bincount(ds.matrix.col_indices, minlength=ds.n_cols).astype(np.float64)
    used = counts > 0
    p = counts / ds.n_rows
    inv_p = np.full(ds.n_cols, np.nan)
    inv_p[used] = ds.n_rows / counts[used]
    d_max = float(inv_p[used].max()) if used.any() else 1.0
    delta = float(p.max()) if used.any() else 0.0
    return FeatureStats(p=p, inv_p=inv_p, used=used, d_max=d_max, delta=delta)


def with_bias_column(ds: SparseDataset) -> SparseDataset:
    """Append a constant-1 bias feature as a new last column (off by default
    everywhere; callers opt in)."""
    m = ds.matrix
    n, nnz = m.n_rows, m.nnz
    offsets = m.row_offsets + np.arange(n + 1, dtype=np.int64)
    cols = np.empty(nnz + n, dtype=np.int64)
    vals = np.empty(nnz + n, dtype=np.float64)
    for i in range(n):
        lo, hi = m.row_offsets[i], m.row_offsets[i + 1]
        cols[offsets[i] : offsets[i + 1] - 1] = m.col_indices[lo:hi]
        vals[offsets[i] : offsets[i + 1] - 1] = m.values[lo:hi]
        cols[offsets[i + 1] - 1] = m.n_cols
        vals[offsets[i + 1] - 1] = 1.0
    matrix = SparseMatrix(
        row_offsets=offsets,
        col_indices=cols,
        values=vals,
        n_rows=n,
        n_cols=m.n_cols + 1,
    )
    return SparseDataset(matrix=matrix, labels=ds.labels.copy(), normalized=False)
