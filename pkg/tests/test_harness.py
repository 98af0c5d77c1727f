"""Experiment harness: synthetic generation, end-to-end runs with CSV
traces, the reference-optimum cache, the closed-form ridge cross-check, and
the speedup bench."""

from __future__ import annotations

import math

import numpy as np
import pytest

from migbench import (
    ExperimentSpec,
    SyntheticSpec,
    evaluate,
    generate_synthetic,
    make_objective,
    read_trace_csv,
    reference_optimum,
    run_experiment,
    speedup_bench,
)
from migbench.harness import dispatch, load_dataset
from migbench.reference import ReferenceCache, problem_key
from migbench.traces import CSV_HEADER


# ------------------------------------------------------------- synthetic


def test_synthetic_is_deterministic_and_normalized():
    a = generate_synthetic(30, 12, 4, 0.5, seed=3)
    b = generate_synthetic(30, 12, 4, 0.5, seed=3)
    assert a.equals(b)
    c = generate_synthetic(30, 12, 4, 0.5, seed=4)
    assert not a.equals(c)
    assert a.normalized
    sq = a.matrix.row_sq_norms()
    np.testing.assert_allclose(sq, 1.0, rtol=1e-12)
    offs = a.matrix.row_offsets
    assert np.all(np.diff(offs) == 4)


def test_synthetic_labels_by_task():
    cls = generate_synthetic(50, 10, 3, 0.5, seed=5, task="classification")
    assert set(np.unique(cls.labels)) <= {-1.0, 1.0}
    reg = generate_synthetic(50, 10, 3, 0.5, seed=5, task="regression")
    assert np.any(np.abs(reg.labels) != 1.0)


def test_synthetic_support_probabilities_match_density():
    # uniform supports: mean appearance probability is exactly nnz/d, and
    # the max stays within binomial noise of it (~sqrt(p(1-p)/n) per column)
    from migbench import compute_feature_stats

    n, d, nnz = 1000, 200, 10
    stats = compute_feature_stats(generate_synthetic(n, d, nnz, 0.5, seed=6))
    p = nnz / d
    assert float(stats.p.mean()) == pytest.approx(p, abs=1e-15)
    sd = math.sqrt(p * (1 - p) / n)
    assert p - 6 * sd < stats.delta < p + 6 * sd
    assert stats.delta == stats.p.max()


# ------------------------------------------------------------ spec handling


def test_spec_requires_exactly_one_data_source():
    with pytest.raises(ValueError):
        ExperimentSpec()
    with pytest.raises(ValueError):
        ExperimentSpec(data="a.txt", synthetic=SyntheticSpec(10, 5, 2, 0.5))
    with pytest.raises(ValueError):
        ExperimentSpec(synthetic=SyntheticSpec(10, 5, 2, 0.5), solver="sgd")


def test_load_dataset_normalize_and_bias(tmp_path):
    path = tmp_path / "tiny.txt"
    path.write_text("1 1:3.0 2:4.0\n-1 1:1.0\n")
    spec = ExperimentSpec(data=str(path), normalize=False)
    raw = load_dataset(spec)
    assert raw.matrix.row_sq_norms()[0] == 25.0
    normed = load_dataset(ExperimentSpec(data=str(path)))
    np.testing.assert_allclose(normed.matrix.row_sq_norms(), 1.0, rtol=1e-12)
    biased = load_dataset(ExperimentSpec(data=str(path), bias=True))
    assert biased.n_cols == raw.n_cols + 1
    np.testing.assert_allclose(biased.matrix.row_sq_norms(), 1.0, rtol=1e-12)


def test_dispatch_uses_given_start_point():
    spec = ExperimentSpec(synthetic=SyntheticSpec(20, 8, 3, 0.5), solver="svrg",
                          epochs=1, seed=6)
    ds = load_dataset(spec)
    obj = make_objective(ds, spec.loss, spec.reg, spec.lam)
    x0 = np.full(ds.n_cols, 0.3)
    res = dispatch(obj, ds, spec, x0=x0)
    assert res.traces[0].objective == evaluate(obj, ds, x0)


def test_sparse_l1_rejection_propagates_through_harness():
    spec = ExperimentSpec(synthetic=SyntheticSpec(20, 8, 3, 0.5),
                          solver="sparse-mig", loss="squared", reg="l1",
                          lam=1e-3, epochs=1)
    with pytest.raises(ValueError, match="l1"):
        run_experiment(spec)


# -------------------------------------------------------------- end to end


def test_run_experiment_writes_exact_roundtrip_csv(tmp_path):
    out = tmp_path / "trace.csv"
    spec = ExperimentSpec(synthetic=SyntheticSpec(40, 10, 4, 0.5), solver="mig",
                          lam=1e-2, epochs=5, seed=7, out=str(out))
    report = run_experiment(spec, cache=ReferenceCache(tmp_path / "cache.jsonl"))

    text = out.read_text()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    back = read_trace_csv(str(out))
    assert back == report.traces  # repr round-trip: bit-for-bit equality

    calls = [t.oracle_calls for t in report.traces]
    assert calls[0] == 0 and all(b > a for a, b in zip(calls, calls[1:]))
    for t in report.traces:
        assert t.subopt == t.objective - report.reference.fstar
    assert report.traces[-1].subopt < report.traces[0].subopt


def test_reference_matches_closed_form_ridge():
    ds = generate_synthetic(50, 8, 8, 0.3, seed=8, task="regression")
    lam = 0.1
    obj = make_objective(ds, "squared", "l2", lam)
    ref = reference_optimum(obj, ds, tol=1e-12)
    assert ref.certified

    A = ds.matrix.to_scipy().toarray()
    b = ds.labels
    n = ds.n_rows
    # stationarity of (1/n) sum (<a_i,x> + b_i)^2 + (lam/2)||x||^2
    xstar = np.linalg.solve((2.0 / n) * A.T @ A + lam * np.eye(ds.n_cols),
                            -(2.0 / n) * A.T @ b)
    assert np.max(np.abs(ref.x - xstar)) < 1e-8
    assert ref.fstar == pytest.approx(evaluate(obj, ds, xstar), abs=1e-12)


def test_reference_cache_hits_bitwise(tmp_path):
    path = tmp_path / "cache.jsonl"
    ds = generate_synthetic(30, 8, 3, 0.5, seed=9)
    obj = make_objective(ds, "logistic", "l2", 1e-2)

    first = reference_optimum(obj, ds, cache=ReferenceCache(path))
    # a fresh cache object re-reads the file; the record must round-trip
    warm = ReferenceCache(path)
    second = reference_optimum(obj, ds, cache=warm)
    assert second.fstar == first.fstar
    np.testing.assert_array_equal(second.x, first.x)
    assert second.iterations == first.iterations
    assert second.key == first.key == problem_key(obj, ds)
    assert len(path.read_text().splitlines()) == 1

    # unrelated problem gets its own record
    obj2 = make_objective(ds, "logistic", "l2", 5e-2)
    reference_optimum(obj2, ds, cache=warm)
    assert len(path.read_text().splitlines()) == 2


# ----------------------------------------------------------------- speedup


def test_speedup_bench_smoke(tmp_path):
    spec = ExperimentSpec(synthetic=SyntheticSpec(60, 10, 4, 0.5),
                          solver="async-mig", lam=1e-2, epochs=5, seed=10)
    rows = speedup_bench(spec, [1, 2], target_subopt=1e-3, max_epochs=50,
                         cache=ReferenceCache(tmp_path / "c.jsonl"))
    assert [r.threads for r in rows] == [1, 2]
    assert all(r.reached for r in rows)
    assert rows[0].speedup == 1.0
    assert all(r.wall_ms > 0 for r in rows)
    assert all(0 < r.epochs <= 50 for r in rows)
    assert math.isfinite(rows[1].speedup)


def test_speedup_bench_rejects_serial_solver():
    spec = ExperimentSpec(synthetic=SyntheticSpec(20, 8, 3, 0.5), solver="mig")
    with pytest.raises(ValueError):
        speedup_bench(spec, [1, 2])
