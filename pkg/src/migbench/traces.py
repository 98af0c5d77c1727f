"""Per-epoch trace records and their CSV form.

The CSV schema is fixed: header ``epoch,oracle_calls,wall_ms,objective,subopt``,
one row per record. Floats are written with repr so a re-parsed file equals
the in-memory trace bit-for-bit.

Conventions: ``oracle_calls`` counts component-gradient evaluations only
(cumulative); ``wall_ms`` is cumulative time spent inside solver work
(inner loops and full-gradient passes), excluding the objective evaluations
done for the trace itself; ``subopt`` is F - F* once a reference optimum is
known, NaN before that.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

CSV_HEADER = ("epoch", "oracle_calls", "wall_ms", "objective", "subopt")


@dataclass
class EpochTrace:
    epoch: int
    oracle_calls: int
    wall_ms: float
    objective: float
    subopt: float = float("nan")


@dataclass
class RunResult:
    """What a solver run returns: final point, traces, resolved parameters."""

    x: np.ndarray
    traces: list[EpochTrace]
    params: dict[str, Any] = field(default_factory=dict)


def with_subopt(traces: list[EpochTrace], fstar: float) -> list[EpochTrace]:
    return [replace(t, subopt=t.objective - fstar) for t in traces]


def write_trace_csv(traces: list[EpochTrace], path_or_file) -> None:
    if hasattr(path_or_file, "write"):
        _write(traces, path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write(traces, fh)


def _write(traces, fh) -> None:
    w = csv.writer(fh)
    w.writerow(CSV_HEADER)
    for t in traces:
        w.writerow([t.epoch, t.oracle_calls, repr(t.wall_ms), repr(t.objective), repr(t.subopt)])


def trace_csv_text(traces: list[EpochTrace]) -> str:
    buf = io.StringIO()
    _write(traces, buf)
    return buf.getvalue()


def read_trace_csv(path_or_text) -> list[EpochTrace]:
    """Inverse of :func:`write_trace_csv`; accepts a path or CSV text."""
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        fh = io.StringIO(path_or_text)
        return _read(fh)
    with open(path_or_text, newline="") as fh:
        return _read(fh)


def _read(fh) -> list[EpochTrace]:
    r = csv.reader(fh)
    header = tuple(next(r))
    if header != CSV_HEADER:
        raise ValueError(f"unexpected trace header {header!r}")
    out = []
    for row in r:
        if not row:
            continue
        out.append(
            EpochTrace(
                epoch=int(row[0]),
                oracle_calls=int(row[1]),
                wall_ms=float(row[2]),
                objective=float(row[3]),
                subopt=float(row[4]),
            )
        )
    return out


class EpochClock:
    """Accumulates solver-only wall time across an epoch loop."""

    def __init__(self):
        self.total_ms = 0.0
        self._t0 = None

    def start(self):
        self._t0 = time.perf_counter()

    def stop(self) -> float:
        self.total_ms += (time.perf_counter() - self._t0) * 1e3
        self._t0 = None
        return self.total_ms
