"""Command-line client for the solver service.

Three verbs::

    migbench run      one solver run, trace CSV to --out
    migbench fstar    resolve (and cache) the reference optimum F*
    migbench speedup  time an async solver across thread counts

The CLI builds the same request models the HTTP service accepts and, by
default, executes them in process - no server needed. Pass --server URL to
send the request to a running `uvicorn migbench.service:app` instead; file
outputs are still written locally by the client.
"""

from __future__ import annotations

import argparse
import sys

from .reference import ReferenceCache
from .traces import EpochTrace, write_trace_csv

_LOSS_BY_NAME = {"logistic": "logistic", "ridge": "squared"}


def _int_or_auto(v: str):
    return None if v == "auto" else int(v)


def _float_or_auto(v: str):
    return None if v == "auto" else float(v)


def _restart(v: str):
    return v if v == "auto" else int(v)


def _synthetic(v: str):
    parts = v.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("--synthetic wants n,d,nnz,noise")
    return int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])


def _thread_list(v: str):
    return [int(t) for t in v.split(",")]


def _add_problem_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="LibSVM file path")
    src.add_argument("--synthetic", type=_synthetic, metavar="n,d,nnz,noise",
                     help="generate a synthetic instance instead")
    p.add_argument("--loss", choices=sorted(_LOSS_BY_NAME), default="logistic")
    p.add_argument("--reg", choices=["l2", "l1", "none"], default="l2")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4,
                   help="regularization weight")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--server", help="send the request to this service URL "
                   "instead of executing in process")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="migbench", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one solver and write its trace")
    _add_problem_args(run)
    run.add_argument("--solver", default="mig",
                     choices=["mig", "mig-nsc", "sparse-mig", "async-mig",
                              "svrg", "saga", "kromagnon", "asaga"])
    run.add_argument("--epochs", type=int, default=20)
    run.add_argument("--m", type=_int_or_auto, default=None,
                     help="epoch length (default/auto: 2n)")
    run.add_argument("--eta", type=_float_or_auto, default=None,
                     help="step size (default/auto: solver preset)")
    run.add_argument("--theta", type=_float_or_auto, default=None,
                     help="coupling weight (default/auto: solver preset)")
    run.add_argument("--option", choices=["I", "II"], default="II",
                     help="epoch-average window for sparse/async MiG")
    run.add_argument("--restart-every", type=_restart, default=None,
                     help="sparse option II restart period (count or 'auto')")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--out", help="trace CSV path")
    run.add_argument("--cache", default="fstar_cache.jsonl",
                     help="F* cache file (in-process mode)")

    fstar = sub.add_parser("fstar", help="resolve and cache the reference optimum")
    _add_problem_args(fstar)
    fstar.add_argument("--cache", default="fstar_cache.jsonl",
                       help="JSONL cache file (in-process mode)")

    speed = sub.add_parser("speedup", help="time an async solver across thread counts")
    _add_problem_args(speed)
    speed.add_argument("--solver", default="async-mig",
                       choices=["async-mig", "kromagnon", "asaga"])
    speed.add_argument("--threads", type=_thread_list, default=[1, 2, 4],
                       metavar="1,2,4", help="comma-separated thread counts")
    speed.add_argument("--epochs", type=int, default=200,
                       help="per-run epoch cap")
    speed.add_argument("--m", type=_int_or_auto, default=None)
    speed.add_argument("--eta", type=_float_or_auto, default=None)
    speed.add_argument("--theta", type=_float_or_auto, default=None)
    speed.add_argument("--option", choices=["I", "II"], default="II")
    speed.add_argument("--target", type=float, default=1e-5,
                       help="suboptimality target")
    speed.add_argument("--cache", default="fstar_cache.jsonl")
    return ap


def _problem_payload(args) -> dict:
    payload = {
        "loss": _LOSS_BY_NAME[args.loss],
        "reg": args.reg,
        "lam": args.lam,
        "seed": args.seed,
    }
    if args.data is not None:
        payload["data"] = args.data
    else:
        n, d, nnz, noise = args.synthetic
        payload["synthetic"] = {"n": n, "d": d, "nnz": nnz, "noise": noise}
    return payload


def _post(server: str, path: str, payload: dict) -> dict:
    import httpx

    resp = httpx.post(server.rstrip("/") + path, json=payload, timeout=None)
    if resp.status_code != 200:
        raise SystemExit(f"server error {resp.status_code}: {resp.text}")
    return resp.json()


def _cmd_run(args) -> int:
    from . import service

    payload = _problem_payload(args)
    payload.update(solver=args.solver, epochs=args.epochs, m=args.m, eta=args.eta,
                   theta=args.theta, option=args.option,
                   restart_every=args.restart_every, threads=args.threads)
    if args.server:
        data = _post(args.server, "/run", payload)
    else:
        cache = ReferenceCache(args.cache)
        data = service.execute_run(service.RunRequest(**payload),
                                   cache=cache).model_dump()
    records = [EpochTrace(**r) for r in data["records"]]
    if args.out:
        write_trace_csv(records, args.out)
    last = records[-1]
    print(f"solver={data['solver']} fstar={data['fstar']!r} "
          f"certified={data['certified']}")
    print(f"final epoch={last.epoch} oracle_calls={last.oracle_calls} "
          f"objective={last.objective!r} subopt={last.subopt!r}")
    if args.out:
        print(f"trace written to {args.out}")
    return 0


def _cmd_fstar(args) -> int:
    from . import service

    payload = _problem_payload(args)
    if args.server:
        data = _post(args.server, "/fstar", payload)
    else:
        cache = ReferenceCache(args.cache)
        data = service.execute_fstar(service.ProblemRequest(**payload),
                                     cache=cache).model_dump()
        print(f"cache file: {args.cache}")
    print(f"key={data['key']}")
    print(f"fstar={data['fstar']!r} iterations={data['iterations']} "
          f"grad_map_norm={data['grad_map_norm']:.3e} certified={data['certified']}")
    return 0


def _cmd_speedup(args) -> int:
    from . import service

    payload = _problem_payload(args)
    payload.update(solver=args.solver, m=args.m, eta=args.eta, theta=args.theta,
                   option=args.option, thread_list=args.threads,
                   target_subopt=args.target, max_epochs=args.epochs)
    if args.server:
        data = _post(args.server, "/speedup", payload)
    else:
        cache = ReferenceCache(args.cache)
        data = service.execute_speedup(service.SpeedupRequest(**payload),
                                       cache=cache).model_dump()
    print(f"target subopt: {data['target_subopt']:g}")
    print(f"{'threads':>7} {'wall_ms':>12} {'oracle_calls':>12} "
          f"{'epochs':>6} {'reached':>7} {'speedup':>8}")
    for r in data["rows"]:
        speed = f"{r['speedup']:.2f}" if r["speedup"] == r["speedup"] else "-"
        print(f"{r['threads']:>7} {r['wall_ms']:>12.1f} {r['oracle_calls']:>12} "
              f"{r['epochs']:>6} {str(r['reached']):>7} {speed:>8}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "fstar":
            return _cmd_fstar(args)
        return _cmd_speedup(args)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
