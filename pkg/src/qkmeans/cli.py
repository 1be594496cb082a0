"""Command-line interface.

Subcommands:
    gen       write a synthetic manifold dataset to disk
    seed      run one seeding algorithm, emit a JSON report
    bench     time seeding algorithms over a k-grid, emit CSV rows
    scaling   beta/eta power-law study, emit a JSON report
    id        MLE intrinsic-dimension estimates, emit a JSON report
    validate  run the invariant suite, exit nonzero on failure

Exit codes: 0 success, 1 validation failure, 2 usage error, 3 I/O error.
Report-producing commands with --out also render PNG figures next to the
output unless --no-plot is given.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone

import numpy as np

from .analysis import beta_curve, fit_power_law, mle_id
from .dataset import Dataset, JlOptions, SyntheticSpec, gen_manifold, inject_noise, load, preprocess, save
from .seeding import RejectionConfig, kmeanspp_exact, qkmeans, rho_delta_reference, uniform_seeding
from .validate import run_all

__all__ = ["main"]

_ALGOS = ("qkmeans", "kmeanspp", "uniform", "rho-delta")


class _Exit(Exception):
    """Carries a CLI exit code and message up to main()."""

    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code
        self.message = message


def _parse_m(text: str) -> float:
    if text == "inf":
        return math.inf
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--m must be an integer or 'inf', got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("--m must be >= 1")
    return float(value)


def _m_repr(m: float):
    """JSON-safe echo of the m knob: 'inf' or a plain integer."""
    return "inf" if m == math.inf else int(m)


def _parse_ks(text: str) -> list[int]:
    try:
        ks = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--ks must be comma-separated integers, got {text!r}")
    if not ks:
        raise argparse.ArgumentTypeError("--ks is empty")
    return ks


def _py(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {k: _py(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_py(v) for v in obj]
    return obj


def _manifest(command: str, params: dict, input_path: str | None) -> dict:
    digest = None
    if input_path is not None:
        with open(input_path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
    return {
        "command": command,
        "params": _py(params),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "input_digest": digest,
    }


def _write_text(out: str | None, text: str) -> None:
    if out is None:
        print(text)
        return
    try:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise _Exit(3, f"cannot write {out}: {exc}")


def _derived_seeds(base: int, labels: list[tuple]) -> dict[tuple, int]:
    return {
        lab: int(np.random.SeedSequence(entropy=base, spawn_key=tuple(int(x) for x in lab)).generate_state(1)[0])
        for lab in labels
    }


def _load_pipeline(args, jl_k: int) -> Dataset:
    try:
        ds = load(args.input, args.format)
    except OSError as exc:
        raise _Exit(3, f"cannot read {args.input}: {exc}")
    except ValueError as exc:
        raise _Exit(3, f"cannot load {args.input}: {exc}")
    sub = getattr(args, "subsample", None)
    ss = np.random.SeedSequence(args.seed).spawn(3)
    if sub is not None:
        if sub < 2:
            raise _Exit(2, "--subsample must be >= 2")
        if sub < ds.n:
            rng = np.random.default_rng(ss[0])
            ds = Dataset(ds.points[rng.choice(ds.n, sub, replace=False)])
    jl = None
    jl_eps = getattr(args, "jl_eps", None)
    if jl_eps is not None:
        jl = JlOptions(eps_jl=jl_eps, k=jl_k, seed=int(ss[1].generate_state(1)[0]))
    try:
        ds = preprocess(ds, jl)
        nsr = getattr(args, "nsr", None)
        if nsr:
            ds = inject_noise(ds, nsr, rng_seed=int(ss[2].generate_state(1)[0]))
    except ValueError as exc:
        raise _Exit(2, str(exc))
    return ds


def _run_algo(ds: Dataset, algo: str, k: int, seed: int, args):
    try:
        if algo == "qkmeans":
            cfg = RejectionConfig(m=args.m, rho=args.rho, rng_seed=seed, ann_backend=args.ann)
            return qkmeans(ds, k, cfg)
        if algo == "kmeanspp":
            return kmeanspp_exact(ds, k, rng_seed=seed)
        if algo == "uniform":
            return uniform_seeding(ds, k, rng_seed=seed)
        if algo == "rho-delta":
            return rho_delta_reference(ds, k, rho=args.rho, delta=args.delta, rng_seed=seed)
    except ValueError as exc:
        raise _Exit(2, str(exc))
    raise _Exit(2, f"unknown algo {algo!r}")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen(args) -> int:
    amb = args.ambient_dim if args.ambient_dim is not None else args.d
    try:
        spec = SyntheticSpec(intrinsic_dim=args.d, ambient_dim=amb, n=args.n,
                             kind=args.kind, rng_seed=args.seed)
        ds = gen_manifold(spec)
    except ValueError as exc:
        raise _Exit(2, str(exc))
    try:
        save(ds, args.out, args.format)
    except OSError as exc:
        raise _Exit(3, f"cannot write {args.out}: {exc}")
    print(json.dumps({"written": args.out, "n": ds.n, "dim": ds.dim, "kind": args.kind}))
    return 0


def _cmd_seed(args) -> int:
    if args.k < 1:
        raise _Exit(2, "--k must be >= 1")
    if args.algo not in _ALGOS:
        raise _Exit(2, f"unknown algo {args.algo!r}")
    if not 0.0 <= args.delta < 0.5:
        raise _Exit(2, "--delta must lie in [0, 0.5)")
    ds = _load_pipeline(args, jl_k=args.k)
    if args.k > ds.n:
        raise _Exit(2, f"--k {args.k} exceeds dataset rows {ds.n}")
    res = _run_algo(ds, args.algo, args.k, args.seed, args)
    params = {
        "input": args.input, "format": args.format, "algo": args.algo, "k": args.k,
        "m": _m_repr(args.m), "rho": args.rho, "delta": args.delta, "ann": args.ann,
        "seed": args.seed, "jl_eps": args.jl_eps, "nsr": args.nsr,
        "subsample": args.subsample,
    }
    payload = {
        "manifest": _manifest("seed", params, args.input),
        "algo": args.algo,
        "k": args.k,
        "n": ds.n,
        "dim": ds.dim,
        "center_indices": _py(res.center_indices),
        "center_coords": _py(res.center_coords),
        "final_cost": res.final_cost,
        "per_step_proposals": _py(res.per_step_proposals),
        "fallback_count": res.fallback_count,
        "clamp_count": res.clamp_count,
    }
    _write_text(args.out, json.dumps(payload, indent=2))
    return 0


_POOL_DS: Dataset | None = None
_POOL_ARGS = None


def _bench_cell(cell: tuple) -> dict:
    algo, k, run, seed = cell
    res = _run_algo(_POOL_DS, algo, k, seed, _POOL_ARGS)
    return {"algo": algo, "k": k, "run": run, "seed": seed,
            "time_ms": res.elapsed * 1e3, "cost": res.final_cost}


def _cmd_bench(args) -> int:
    global _POOL_DS, _POOL_ARGS
    algos = [a for a in args.algo.split(",") if a]
    for a in algos:
        if a not in _ALGOS:
            raise _Exit(2, f"unknown algo {a!r}")
    if args.runs < 1:
        raise _Exit(2, "--runs must be >= 1")
    if not 0.0 <= args.delta < 0.5:
        raise _Exit(2, "--delta must lie in [0, 0.5)")
    ds = _load_pipeline(args, jl_k=max(args.ks))
    for k in args.ks:
        if not 1 <= k <= ds.n:
            raise _Exit(2, f"k = {k} outside [1, {ds.n}]")
    labels = [(ai, ki, run) for ai in range(len(algos)) for ki in range(len(args.ks))
              for run in range(args.runs)]
    seeds = _derived_seeds(args.seed, labels)
    cells = [(algos[ai], args.ks[ki], run, seeds[(ai, ki, run)]) for (ai, ki, run) in labels]
    _POOL_DS, _POOL_ARGS = ds, args
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if threads < 1:
        raise _Exit(2, "--threads must be >= 1")
    if threads == 1 or len(cells) == 1:
        rows = [_bench_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_bench_cell, cells))
    name = os.path.basename(args.input)
    params = {
        "input": args.input, "format": args.format, "algos": algos, "ks": args.ks,
        "runs": args.runs, "m": _m_repr(args.m), "rho": args.rho, "delta": args.delta,
        "ann": args.ann, "seed": args.seed, "threads": threads,
        "jl_eps": args.jl_eps, "nsr": args.nsr, "subsample": args.subsample,
    }
    man = _manifest("bench", params, args.input)
    lines = ["# " + json.dumps(man), "dataset,algo,k,seed,time_ms,cost"]
    for r in rows:
        lines.append(f"{name},{r['algo']},{r['k']},{r['seed']},{r['time_ms']!r},{r['cost']!r}")
    _write_text(args.out, "\n".join(lines) + "\n")
    summary = []
    for algo in algos:
        for k in args.ks:
            times = [r["time_ms"] for r in rows if r["algo"] == algo and r["k"] == k]
            costs = [r["cost"] for r in rows if r["algo"] == algo and r["k"] == k]
            summary.append({
                "algo": algo, "k": k,
                "time_ms_mean": statistics.fmean(times),
                "time_ms_median": statistics.median(times),
                "cost_mean": statistics.fmean(costs),
            })
    if args.out is not None:
        print(json.dumps({"summary": summary}, indent=2))
        if not args.no_plot:
            from .plots import render_bench

            base = os.path.splitext(args.out)[0]
            for p in render_bench(rows, base):
                print(f"figure: {p}")
    return 0


def _cmd_scaling(args) -> int:
    if args.runs < 1:
        raise _Exit(2, "--runs must be >= 1")
    usable = [k for k in args.ks if k > 1]
    if len(usable) < 3:
        raise _Exit(2, "--ks needs at least 3 values above 1 for a power-law fit")
    ds = _load_pipeline(args, jl_k=max(args.ks))
    for k in args.ks:
        if k > ds.n:
            raise _Exit(2, f"k = {k} exceeds dataset rows {ds.n}")
    points, records = beta_curve(ds, args.ks, runs=args.runs, lloyd_iters=args.lloyd_iters,
                                 rng_seed=args.seed, aggregate=args.aggregate)
    ks = [p["k"] for p in points]
    fit_b = fit_power_law(ks, [p["beta"] for p in points])
    eta_pts = [(p["k"], p["eta_centers"]) for p in points if math.isfinite(p["eta_centers"])]
    if len(eta_pts) < 3:
        raise _Exit(1, "too few finite eta points to fit")
    fit_e = fit_power_law([k for k, _ in eta_pts], [e for _, e in eta_pts])
    params = {
        "input": args.input, "format": args.format, "ks": args.ks, "runs": args.runs,
        "lloyd_iters": args.lloyd_iters, "aggregate": args.aggregate, "seed": args.seed,
        "jl_eps": args.jl_eps, "nsr": args.nsr, "subsample": args.subsample,
    }
    payload = {
        "manifest": _manifest("scaling", params, args.input),
        "points": _py(points),
        "records": _py(records),
        "fit_beta": _py(vars(fit_b)),
        "fit_eta": _py(vars(fit_e)),
        "eps_hat": fit_b.slope,
        "eps_hat_from_eta": 2.0 * fit_e.slope,
        "r2_beta": fit_b.r_squared,
        "r2_eta": fit_e.r_squared,
    }
    _write_text(args.out, json.dumps(payload, indent=2))
    if args.out is not None and not args.no_plot:
        from .plots import render_scaling

        base = os.path.splitext(args.out)[0]
        for p in render_scaling(payload, base):
            print(f"figure: {p}")
    return 0


def _cmd_id(args) -> int:
    if any(k < 2 for k in args.ks):
        raise _Exit(2, "--ks for id are neighborhood sizes and must all be >= 2")
    runs = args.runs
    if runs < 1:
        raise _Exit(2, "--runs must be >= 1")
    if args.subsample is None and runs > 1:
        print("note: no --subsample, repeats would be identical; forcing --runs 1", file=sys.stderr)
        runs = 1
    ds = _load_pipeline(args, jl_k=2)
    labels = [(ki, rep) for ki in range(len(args.ks)) for rep in range(runs)]
    seeds = _derived_seeds(args.seed, labels)
    per = []
    grand: list[float] = []
    for ki, k_nn in enumerate(args.ks):
        est = []
        for rep in range(runs):
            try:
                est.append(mle_id(ds, k_nn, subsample=args.subsample, rng_seed=seeds[(ki, rep)]))
            except ValueError as exc:
                raise _Exit(1, f"id estimate failed at k_nn={k_nn}: {exc}")
        per.append({"k_nn": k_nn, "estimates": est, "mean": statistics.fmean(est)})
        grand.extend(est)
    params = {
        "input": args.input, "format": args.format, "ks": args.ks, "runs": runs,
        "subsample": args.subsample, "seed": args.seed,
        "jl_eps": args.jl_eps, "nsr": args.nsr,
    }
    payload = {
        "manifest": _manifest("id", params, args.input),
        "per_k_nn": per,
        "grand_mean": statistics.fmean(grand),
    }
    _write_text(args.out, json.dumps(payload, indent=2))
    if args.out is not None and not args.no_plot:
        from .plots import render_id

        base = os.path.splitext(args.out)[0]
        for p in render_id(payload, base):
            print(f"figure: {p}")
    return 0


def _cmd_validate(args) -> int:
    checks = run_all(fault_oversampling=args.break_oversampling)
    for c in checks:
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: {c['detail']}")
    all_passed = all(c["passed"] for c in checks)
    if args.out is not None:
        payload = {
            "manifest": _manifest("validate", {"seed": args.seed}, None),
            "checks": checks,
            "all_passed": all_passed,
        }
        _write_text(args.out, json.dumps(payload, indent=2))
    return 0 if all_passed else 1


# ---------------------------------------------------------------------------
# parser


def _add_input_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="dataset file")
    p.add_argument("--format", choices=("csv", "bin"), default="csv", help="dataset file format")
    p.add_argument("--seed", type=int, default=0, help="base RNG seed")
    p.add_argument("--jl-eps", dest="jl_eps", type=float, default=None,
                   help="enable random projection with this distortion parameter")
    p.add_argument("--nsr", type=float, default=None, help="noise-to-signal ratio to inject")
    p.add_argument("--subsample", type=int, default=None, help="work on this many uniform rows")
    p.add_argument("--out", default=None, help="output path (default stdout)")


def _add_seeding_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m", type=_parse_m, default=math.inf,
                   help="rejection budget multiplier, integer or 'inf'")
    p.add_argument("--rho", type=float, default=1.0, help="ANN approximation parameter in (0,1]")
    p.add_argument("--delta", type=float, default=0.0, help="uniform mixing for rho-delta")
    p.add_argument("--ann", choices=("exact", "lsh"), default="exact", help="ANN backend")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkmeans", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command")

    g = sub.add_parser("gen", help="write a synthetic manifold dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--d", type=int, default=2, help="intrinsic dimension")
    g.add_argument("--ambient-dim", dest="ambient_dim", type=int, default=None)
    g.add_argument("--kind", choices=("unit-cube", "unit-sphere"), default="unit-cube")
    g.add_argument("--format", choices=("csv", "bin"), default="bin")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=_cmd_gen)

    s = sub.add_parser("seed", help="run one seeding algorithm")
    _add_input_opts(s)
    _add_seeding_opts(s)
    s.add_argument("--algo", default="qkmeans", help="|".join(_ALGOS))
    s.add_argument("--k", type=int, required=True)
    s.set_defaults(func=_cmd_seed)

    b = sub.add_parser("bench", help="time seeding algorithms over a k grid")
    _add_input_opts(b)
    _add_seeding_opts(b)
    b.add_argument("--algo", default="qkmeans,kmeanspp", help="comma list of algorithms")
    b.add_argument("--ks", type=_parse_ks, required=True)
    b.add_argument("--runs", type=int, default=5)
    b.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: hardware parallelism)")
    b.add_argument("--no-plot", action="store_true")
    b.set_defaults(func=_cmd_bench)

    c = sub.add_parser("scaling", help="beta/eta power-law study")
    _add_input_opts(c)
    c.add_argument("--ks", type=_parse_ks, required=True)
    c.add_argument("--runs", type=int, default=5)
    c.add_argument("--lloyd-iters", dest="lloyd_iters", type=int, default=25)
    c.add_argument("--aggregate", choices=("mean", "best"), default="mean")
    c.add_argument("--no-plot", action="store_true")
    c.set_defaults(func=_cmd_scaling)

    i = sub.add_parser("id", help="MLE intrinsic dimension")
    _add_input_opts(i)
    i.add_argument("--ks", type=_parse_ks, default=[10, 20],
                   help="comma list of neighborhood sizes")
    i.add_argument("--runs", type=int, default=1, help="independent subsample repeats")
    i.add_argument("--no-plot", action="store_true")
    i.set_defaults(func=_cmd_id)

    v = sub.add_parser("validate", help="run the invariant suite")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default=None)
    v.add_argument("--break-oversampling", dest="break_oversampling",
                   action="store_true", help=argparse.SUPPRESS)
    v.set_defaults(func=_cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except _Exit as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
