"""Command-line harness: generate problems, run solves and experiments, analyze.

Subcommands write delimited outputs (CSV/JSON) and, on the report paths,
matplotlib figures next to them. Standard output carries data summaries;
diagnostics go to standard error. Exit codes: 0 success, 1 runtime/analysis
failure, 2 invalid flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import corruption_bound, noisy_horizon, scrk_rate_bound, subset_max_frobenius, subset_min_singular
from .errors import ScrkError
from .experiments import default_workers, load_config, run_experiment
from .io import load_problem, save_problem, write_trace_csv
from .linalg import build_projector
from .plotting import render_aggregates, render_trace
from .problems import FAMILIES, GeneratorSpec, ct_system, generate, ode_line_system, with_trusted_block
from .solvers import SolverConfig, run_solver


def _add_generate(sub):
    p = sub.add_parser("generate", help="generate a problem bundle")
    p.add_argument("--family", required=True, choices=FAMILIES + ("ode", "ct"))
    p.add_argument("--m", type=int, default=0)
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lo", type=float, default=0.9, help="uniform family: entry lower bound")
    p.add_argument("--hi", type=float, default=1.1, help="uniform family: entry upper bound")
    p.add_argument("--rank", type=int, default=20, help="low-rank-coherent: top block size")
    p.add_argument("--epsilon", type=float, default=0.1, help="coherent families: off-space size")
    p.add_argument("--block", type=int, default=0, help="correlated-mean: collinear block size")
    p.add_argument("--grid-points", type=int, default=100, help="ode family: grid size")
    p.add_argument("--N", type=int, default=50, help="ct family: image side length")
    p.add_argument("--angle-step", type=float, default=2.0, help="ct family: degrees between angles")
    p.add_argument("--rays", type=int, default=50, help="ct family: parallel rays per angle")
    p.add_argument("--m0", type=int, default=0, help="mark the first m0 rows as trusted")
    p.add_argument("--m0-mode", choices=("first", "random"), default="first")
    p.add_argument("--out", required=True)


def _add_solve(sub):
    p = sub.add_parser("solve", help="run one solver on a bundle")
    p.add_argument("bundle")
    p.add_argument("--method", required=True, choices=("rk", "scrk", "quantile-rk", "quantile-scrk"))
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--q", type=float, default=None, help="quantile parameter for quantile methods")
    p.add_argument("--sampling", choices=("projected-norm", "uniform-rejection"), default="projected-norm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record-every", type=int, default=0, help="0 = max(1, iters // 500)")
    p.add_argument("--stop-tol", type=float, default=None)
    p.add_argument("--tol-rank", type=float, default=1e-10)
    p.add_argument("--m0", type=int, default=None, help="override: trust the first m0 rows")
    p.add_argument("--m0-from-sidecar", action="store_true", help="use the bundle's trusted rows (default)")
    p.add_argument("--out", default=None, help="output directory (default: the bundle)")
    p.add_argument("--no-plot", action="store_true")


def _add_experiment(sub):
    p = sub.add_parser("experiment", help="run a multi-trial experiment config")
    p.add_argument("config")
    p.add_argument("--threads", type=int, default=None, help="parallel trial workers (default: SCRK_THREADS or cores)")
    p.add_argument("--no-plot", action="store_true")


def _add_analyze(sub):
    p = sub.add_parser("analyze", help="compute spectral reports for a bundle")
    p.add_argument("bundle")
    p.add_argument("--rates", action="store_true", help="contraction-rate report")
    p.add_argument("--horizon", action="store_true", help="noisy error-horizon report (needs noise in sidecar)")
    p.add_argument("--corruption-bound", action="store_true")
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--subset-alpha", type=float, default=None, help="also report subset spectra at this alpha")
    p.add_argument("--exact-max-subsets", type=int, default=10**6)
    p.add_argument("--sampled", action="store_true", help="sampled subset estimate instead of exact enumeration")
    p.add_argument("--m0", type=int, default=None, help="override: trust the first m0 rows")
    p.add_argument("--tol-rank", type=float, default=1e-10)
    p.add_argument("--out", default=None, help="report path (default: <bundle>/analysis.json)")


def cmd_generate(args) -> int:
    if args.family == "ode":
        problem = ode_line_system(grid_points=args.grid_points)
    elif args.family == "ct":
        problem = ct_system(n_img=args.N, angle_step_deg=args.angle_step, n_rays=args.rays, seed=args.seed)
    else:
        problem = generate(
            GeneratorSpec(
                family=args.family,
                m=args.m,
                n=args.n,
                seed=args.seed,
                lo=args.lo,
                hi=args.hi,
                rank=args.rank,
                epsilon=args.epsilon,
                block=args.block,
            )
        )
    if args.m0 > 0:
        if args.m0_mode == "first":
            i0 = np.arange(args.m0)
        else:
            i0 = np.random.default_rng(args.seed).choice(problem.m, size=args.m0, replace=False)
        problem = with_trusted_block(problem, i0)
    save_problem(problem, args.out)
    print(f"wrote {problem.m}x{problem.n} bundle to {args.out} (family={args.family}, seed={args.seed}, m0={problem.i0.size})")
    return 0


def _solve_flops(method: str, n: int, rank: int) -> float:
    return float(4 * n + (4 * rank * n if method.endswith("scrk") else 0))


def cmd_solve(args) -> int:
    problem = load_problem(args.bundle)
    if args.m0 is not None:
        problem = with_trusted_block(problem, np.arange(args.m0))
    record_every = args.record_every or max(1, args.iters // 500)
    config = SolverConfig(
        method=args.method,
        max_iters=args.iters,
        quantile_q=args.q,
        sampling=args.sampling,
        seed=args.seed,
        record_every=record_every,
        stop_tol=args.stop_tol,
        tol_rank=args.tol_rank,
    )
    trace = run_solver(problem, config)
    out = Path(args.out) if args.out else Path(args.bundle)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.csv"
    write_trace_csv(trace, trace_path)

    final = trace.records[-1]
    err0 = trace.records[0].error
    result = {
        "schema": "scrk-result/1",
        "method": args.method,
        "iterations": final.k,
        "seed": args.seed,
        "rng_generator": trace.generator,
        "final_error": final.error,
        "final_rel_error": (final.error / err0) if (final.error is not None and err0) else None,
        "final_residual_norm": final.residual_norm,
        "wall_time_seconds": trace.wall_time_seconds,
        "flops_per_iteration": _solve_flops(args.method, problem.n, problem.i0.size),
        "config": {
            "method": config.method,
            "max_iters": config.max_iters,
            "quantile_q": config.quantile_q,
            "sampling": config.sampling,
            "seed": config.seed,
            "record_every": config.record_every,
            "stop_tol": config.stop_tol,
            "tol_rank": config.tol_rank,
        },
    }
    with open(out / "result.json", "w") as fh:
        json.dump(result, fh, indent=1)
        fh.write("\n")
    if not args.no_plot:
        render_trace(trace_path, out / "trace.png")
    rel = result["final_rel_error"]
    rel_text = f", rel_error={rel:.3e}" if rel is not None else ""
    print(f"{args.method}: {final.k} iterations, residual={final.residual_norm:.3e}{rel_text}")
    print(f"outputs: {trace_path}" + ("" if args.no_plot else f", {out / 'trace.png'}"))
    return 0


def cmd_experiment(args) -> int:
    config = load_config(args.config)
    workers = args.threads if args.threads is not None else default_workers()
    manifest = run_experiment(config, workers=workers)
    out = Path(config.outputs)
    if manifest["failures"]:
        for failure in manifest["failures"]:
            print(f"variant {failure['variant']} failed: {failure['error']}", file=sys.stderr)
        return 1
    if not args.no_plot and manifest["variants"]:
        csvs = {v["name"]: out / v["aggregate_csv"] for v in manifest["variants"]}
        render_aggregates(csvs, out / "comparison.png", quantity=manifest["variants"][0]["quantity"])
    for v in manifest["variants"]:
        line = f"{v['name']}: median final"
        if "final_log10_rel_error_median" in v:
            line += f" log10 rel error {v['final_log10_rel_error_median']:.2f}"
        else:
            line += f" residual {v['final_residual_median']:.3e}"
        if "line_convergence_fractions" in v:
            fr = v["line_convergence_fractions"]
            line += f" | line1 {fr['line1']:.0%}, line2 {fr['line2']:.0%}"
        print(line)
    print(f"outputs: {out / 'manifest.json'}")
    return 0


def cmd_analyze(args) -> int:
    problem = load_problem(args.bundle)
    if args.m0 is not None:
        problem = with_trusted_block(problem, np.arange(args.m0))
    report: dict = {"schema": "scrk-analysis/1", "m": problem.m, "n": problem.n, "m0": int(problem.i0.size)}

    if args.rates or not (args.horizon or args.corruption_bound or args.subset_alpha):
        rates = scrk_rate_bound(problem.a, problem.i0, args.tol_rank)
        report["rates"] = rates.to_dict()
        print(
            f"rates: scrk={rates.scrk_rate:.6g} rk={rates.rk_rate:.6g} "
            f"sigma_min+(proj)={rates.sigma_min_plus_proj:.6g} sigma_min(A)={rates.sigma_min_full:.6g}"
        )
    if args.horizon:
        if problem.noise is None:
            raise ScrkError("horizon report needs a noise vector in the bundle sidecar")
        horizon = noisy_horizon(problem.a, problem.i0, problem.noise, args.tol_rank)
        report["horizon"] = horizon.to_dict()
        print(f"horizon: gamma0={horizon.gamma0:.6g} gamma1={horizon.gamma1:.6g} rate={horizon.rate:.6g}")
    if args.corruption_bound:
        if args.q is None or args.beta is None:
            raise ScrkError("corruption bound needs --q and --beta")
        pf = build_projector(problem.a[problem.i0], args.tol_rank)
        bound = corruption_bound(
            problem.a,
            problem.i0,
            pf,
            q=args.q,
            beta=args.beta,
            mode="sampled" if args.sampled else "exact",
            max_subsets=args.exact_max_subsets,
        )
        report["corruption_bound"] = bound.to_dict()
        verdict = "guaranteed" if bound.converges_guaranteed else "not guaranteed"
        print(
            f"corruption bound: C={bound.c_qb:.6g} lhs={bound.condition_lhs:.6g} "
            f"rhs={bound.condition_rhs:.6g} -> {verdict}"
            + ("" if bound.certified else " (sampled estimate, not certified)")
        )
    if args.subset_alpha is not None:
        pf = build_projector(problem.a[problem.i0], args.tol_rank)
        sub = subset_min_singular(
            problem.a,
            problem.i0,
            pf,
            args.subset_alpha,
            mode="sampled" if args.sampled else "exact",
            max_subsets=args.exact_max_subsets,
        )
        z = subset_max_frobenius(problem.a, problem.i0, pf, args.subset_alpha)
        report["subset"] = {
            "alpha": args.subset_alpha,
            "sigma_min": sub.value,
            "certified": sub.certified,
            "z_alpha": z,
        }
        print(f"subset spectra (alpha={args.subset_alpha}): sigma_min={sub.value:.6g} Z={z:.6g}")

    out = Path(args.out) if args.out else Path(args.bundle) / "analysis.json"
    with open(out, "w") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    print(f"outputs: {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="scrk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_generate(sub)
    _add_solve(sub)
    _add_experiment(sub)
    _add_analyze(sub)
    args = parser.parse_args(argv)
    handlers = {
        "generate": cmd_generate,
        "solve": cmd_solve,
        "experiment": cmd_experiment,
        "analyze": cmd_analyze,
    }
    try:
        return handlers[args.command](args)
    except ScrkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
