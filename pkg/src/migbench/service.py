"""HTTP service wrapping the solver harness.

Endpoints mirror the CLI verbs: POST /run executes one experiment and
returns its trace, POST /fstar resolves (and caches) a reference optimum,
POST /speedup times an async solver across thread counts. The CLI uses the
same request/response models and either calls the handlers in process or
POSTs to a remote server.

Start a server with::

    uvicorn migbench.service:app
"""

from __future__ import annotations

import os

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .harness import (
    ExperimentSpec,
    SyntheticSpec,
    load_dataset,
    run_experiment,
    speedup_bench,
)
from .objectives import make_objective
from .reference import ReferenceCache, reference_optimum

DEFAULT_CACHE_PATH = os.environ.get("MIGBENCH_FSTAR_CACHE", "fstar_cache.jsonl")


class SyntheticRequest(BaseModel):
    n: int = Field(gt=0)
    d: int = Field(gt=0)
    nnz: int = Field(gt=0)
    noise: float = Field(ge=0)


class ProblemRequest(BaseModel):
    data: str | None = None
    synthetic: SyntheticRequest | None = None
    loss: str = "logistic"
    reg: str = "l2"
    lam: float = 1e-4
    seed: int = 0
    normalize: bool = True
    bias: bool = False


class RunRequest(ProblemRequest):
    solver: str = "mig"
    epochs: int = 20
    m: int | None = None
    eta: float | None = None
    theta: float | None = None
    option: str = "II"
    restart_every: int | str | None = None
    threads: int = 1


class TraceRecord(BaseModel):
    epoch: int
    oracle_calls: int
    wall_ms: float
    objective: float
    subopt: float


class RunResponse(BaseModel):
    solver: str
    fstar: float
    certified: bool
    params: dict
    records: list[TraceRecord]


class FstarResponse(BaseModel):
    key: str
    fstar: float
    iterations: int
    grad_map_norm: float
    certified: bool


class SpeedupRequest(RunRequest):
    thread_list: list[int] = Field(default=[1, 2, 4])
    target_subopt: float = 1e-5
    max_epochs: int = 200


class SpeedupRow(BaseModel):
    threads: int
    wall_ms: float
    oracle_calls: int
    epochs: int
    reached: bool
    speedup: float


class SpeedupResponse(BaseModel):
    target_subopt: float
    rows: list[SpeedupRow]


def _to_spec(req: RunRequest) -> ExperimentSpec:
    synthetic = None
    if req.synthetic is not None:
        synthetic = SyntheticSpec(n=req.synthetic.n, d=req.synthetic.d,
                                  nnz=req.synthetic.nnz, noise=req.synthetic.noise)
    return ExperimentSpec(
        data=req.data,
        synthetic=synthetic,
        loss=req.loss,
        reg=req.reg,
        lam=req.lam,
        solver=req.solver,
        epochs=req.epochs,
        m=req.m,
        eta=req.eta,
        theta=req.theta,
        option=req.option,
        restart_every=req.restart_every,
        threads=req.threads,
        seed=req.seed,
        normalize=req.normalize,
        bias=req.bias,
    )


def _json_safe(v):
    import numpy as np

    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer, np.floating)):
        return v.item()
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def execute_run(req: RunRequest, cache: ReferenceCache | None = None) -> RunResponse:
    report = run_experiment(_to_spec(req), cache=cache)
    params = {k: v for k, v in report.result.params.items() if k != "sampled"}
    return RunResponse(
        solver=req.solver,
        fstar=report.reference.fstar,
        certified=report.reference.certified,
        params=_json_safe(params),
        records=[
            TraceRecord(epoch=t.epoch, oracle_calls=t.oracle_calls, wall_ms=t.wall_ms,
                        objective=t.objective, subopt=t.subopt)
            for t in report.traces
        ],
    )


def execute_fstar(req: ProblemRequest, cache: ReferenceCache | None = None) -> FstarResponse:
    spec = _to_spec(RunRequest(**req.model_dump()))
    ds = load_dataset(spec)
    obj = make_objective(ds, spec.loss, spec.reg, spec.lam)
    ref = reference_optimum(obj, ds, cache=cache)
    return FstarResponse(key=ref.key, fstar=ref.fstar, iterations=ref.iterations,
                         grad_map_norm=ref.grad_map_norm, certified=ref.certified)


def execute_speedup(req: SpeedupRequest, cache: ReferenceCache | None = None) -> SpeedupResponse:
    rows = speedup_bench(_to_spec(req), req.thread_list,
                         target_subopt=req.target_subopt,
                         max_epochs=req.max_epochs, cache=cache)
    return SpeedupResponse(
        target_subopt=req.target_subopt,
        rows=[SpeedupRow(threads=r.threads, wall_ms=r.wall_ms,
                         oracle_calls=r.oracle_calls, epochs=r.epochs,
                         reached=r.reached, speedup=r.speedup)
              for r in rows],
    )


def create_app(cache_path: str | None = DEFAULT_CACHE_PATH) -> FastAPI:
    """Build the service with its own reference cache (file created lazily)."""
    app = FastAPI(title="migbench",
                  description="Variance-reduced solver benchmark service")
    cache = ReferenceCache(cache_path)

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/run", response_model=RunResponse)
    def run_endpoint(req: RunRequest):
        try:
            return execute_run(req, cache=cache)
        except (ValueError, FileNotFoundError) as e:
            raise HTTPException(status_code=422, detail=str(e)) from e

    @app.post("/fstar", response_model=FstarResponse)
    def fstar_endpoint(req: ProblemRequest):
        try:
            return execute_fstar(req, cache=cache)
        except (ValueError, FileNotFoundError) as e:
            raise HTTPException(status_code=422, detail=str(e)) from e

    @app.post("/speedup", response_model=SpeedupResponse)
    def speedup_endpoint(req: SpeedupRequest):
        try:
            return execute_speedup(req, cache=cache)
        except (ValueError, FileNotFoundError) as e:
            raise HTTPException(status_code=422, detail=str(e)) from e

    return app


app = create_app()
