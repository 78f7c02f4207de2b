"""Multi-trial experiment harness.

A config describes one problem source (inline generator spec or a bundle
path), optional noise/corruption injection, and a matrix of solver variants.
Trial t derives decoupled generation / corruption / noise / solver seeds from
``base_seed + t``, so trials are independent streams and results do not
depend on execution order or worker count.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InvalidSpec
from .io import load_problem, write_aggregate_csv
from .problems import CorruptionSpec, GeneratorSpec, add_corruptions, add_noise, generate, with_trusted_block
from .solvers import ConvergenceTrace, LinearProblem, SolverConfig, run_solver

CONFIG_SCHEMA = "scrk-experiment/1"
LINE_CONVERGENCE_TOL = 1e-3


@dataclass(frozen=True)
class NoiseSpec:
    law: str = "uniform"
    scale: float = 0.01
    i1_only: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class SolverVariant:
    """One column of the solver comparison matrix (seed filled in per trial)."""

    name: str
    method: str
    max_iters: int
    quantile_q: Optional[float] = None
    sampling: str = "projected-norm"
    record_every: int = 1
    stop_tol: Optional[float] = None
    tol_rank: float = 1e-10

    def config(self, seed: int) -> SolverConfig:
        return SolverConfig(
            method=self.method,
            max_iters=self.max_iters,
            quantile_q=self.quantile_q,
            sampling=self.sampling,
            seed=seed,
            record_every=self.record_every,
            stop_tol=self.stop_tol,
            tol_rank=self.tol_rank,
        )

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ExperimentConfig:
    variants: tuple[SolverVariant, ...]
    trials: int
    base_seed: int = 0
    outputs: str = "out"
    generator: Optional[GeneratorSpec] = None
    problem_path: Optional[str] = None
    m0: int = 0
    m0_mode: str = "first"  # or "random": fresh trusted subset per trial
    corruption: Optional[CorruptionSpec] = None
    noise: Optional[NoiseSpec] = None
    quantity: str = "log10_rel_error"

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidSpec("trials must be >= 1")
        if not self.variants:
            raise InvalidSpec("need at least one solver variant")
        if (self.generator is None) == (self.problem_path is None):
            raise InvalidSpec("exactly one of generator / problem_path must be given")
        if self.m0_mode not in ("first", "random"):
            raise InvalidSpec("m0_mode must be 'first' or 'random'")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = json.load(fh)
    if raw.get("schema") != CONFIG_SCHEMA:
        raise InvalidSpec(f"unsupported experiment schema {raw.get('schema')!r}")
    problem = raw["problem"]
    generator = None
    problem_path = None
    if "path" in problem:
        problem_path = problem["path"]
    else:
        generator = GeneratorSpec(**problem)
    variants = tuple(SolverVariant(**v) for v in raw["variants"])
    corruption = CorruptionSpec(**raw["corruption"]) if raw.get("corruption") else None
    noise = NoiseSpec(**raw["noise"]) if raw.get("noise") else None
    return ExperimentConfig(
        variants=variants,
        trials=int(raw["trials"]),
        base_seed=int(raw.get("base_seed", 0)),
        outputs=raw.get("outputs", "out"),
        generator=generator,
        problem_path=problem_path,
        m0=int(raw.get("m0", 0)),
        m0_mode=raw.get("m0_mode", "first"),
        corruption=corruption,
        noise=noise,
        quantity=raw.get("quantity", "log10_rel_error"),
    )


def trial_seeds(base_seed: int, trial: int) -> tuple[int, int, int, int]:
    """Decoupled (generation, corruption, noise, solver) seeds for one trial."""
    ss = np.random.SeedSequence(base_seed + trial)
    return tuple(int(s) for s in ss.generate_state(4, np.uint64))


def build_trial_problem(config: ExperimentConfig, trial: int,
                        base_problem: Optional[LinearProblem] = None) -> LinearProblem:
    gen_seed, corr_seed, noise_seed, _ = trial_seeds(config.base_seed, trial)
    if config.generator is not None:
        problem = generate(replace(config.generator, seed=gen_seed))
    else:
        problem = base_problem if base_problem is not None else load_problem(config.problem_path)
    if config.m0 > 0:
        if config.m0_mode == "first":
            i0 = np.arange(config.m0)
        else:
            i0 = np.random.default_rng(gen_seed).choice(problem.m, size=config.m0, replace=False)
        problem = with_trusted_block(problem, i0)
    if config.corruption is not None:
        problem = add_corruptions(problem, replace(config.corruption, seed=corr_seed))
    if config.noise is not None:
        problem = add_noise(
            problem,
            law=config.noise.law,
            scale=config.noise.scale,
            seed=noise_seed,
            i1_only=config.noise.i1_only,
        )
    return problem


def run_trial(config: ExperimentConfig, variant: SolverVariant, trial: int,
              base_problem: Optional[LinearProblem] = None) -> ConvergenceTrace:
    problem = build_trial_problem(config, trial, base_problem)
    solver_seed = trial_seeds(config.base_seed, trial)[3]
    return run_solver(problem, variant.config(solver_seed))


def _trial_worker(args):
    config, variant, trial = args
    return run_trial(config, variant, trial)


def default_workers() -> int:
    env = os.environ.get("SCRK_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _line_fractions(config: ExperimentConfig, variant: SolverVariant,
                    traces: list[ConvergenceTrace], base_problem: Optional[LinearProblem]) -> Optional[dict]:
    """Fraction of trials whose final iterate satisfies each candidate line."""
    probe = build_trial_problem(config, 0, base_problem)
    md = probe.metadata
    if "line1_rows" not in md:
        return None
    counts = {"line1": 0, "line2": 0}
    for trial, trace in enumerate(traces):
        problem = build_trial_problem(config, trial, base_problem)
        for key in ("line1", "line2"):
            rows = np.asarray(problem.metadata[f"{key}_rows"], dtype=np.intp)
            resid = np.linalg.norm(problem.a[rows] @ trace.final_x - problem.b[rows])
            counts[key] += bool(resid < LINE_CONVERGENCE_TOL)
    return {key: counts[key] / len(traces) for key in counts}


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> dict:
    """Run all variants x trials; write aggregates and a manifest; return the manifest."""
    out = Path(config.outputs)
    out.mkdir(parents=True, exist_ok=True)
    if workers is None:
        workers = default_workers()
    base_problem = load_problem(config.problem_path) if config.problem_path else None

    manifest = {
        "schema": "scrk-manifest/1",
        "trials": config.trials,
        "base_seed": config.base_seed,
        "quantity": config.quantity,
        "variants": [],
        "failures": [],
    }
    for variant in config.variants:
        jobs = [(config, variant, t) for t in range(config.trials)]
        try:
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    traces = list(pool.map(_trial_worker, jobs))
            else:
                traces = [run_trial(config, variant, t, base_problem) for t in range(config.trials)]
        except Exception as exc:  # noqa: BLE001 - reported in the manifest
            manifest["failures"].append({"variant": variant.name, "error": str(exc)})
            continue

        agg_path = out / f"{variant.name}_aggregate.csv"
        quantity = config.quantity
        if quantity == "log10_rel_error" and traces[0].records[0].error is None:
            quantity = "residual_norm"
        write_aggregate_csv(traces, agg_path, quantity=quantity)

        entry = {
            "name": variant.name,
            "config": variant.to_dict(),
            "aggregate_csv": agg_path.name,
            "quantity": quantity,
            "flops_per_iteration": flops_per_iteration(variant.method, base_problem, config),
        }
        finals = [t.records[-1] for t in traces]
        if finals[0].error is not None:
            rel = [
                rec.error / t.records[0].error
                for rec, t in zip(finals, traces)
                if t.records[0].error and t.records[0].error > 0.0
            ]
            if rel:
                entry["final_log10_rel_error_median"] = float(
                    np.log10(max(float(np.median(rel)), 1e-300))
                )
        entry["final_residual_median"] = float(np.median([r.residual_norm for r in finals]))
        fractions = _line_fractions(config, variant, traces, base_problem)
        if fractions is not None:
            entry["line_convergence_fractions"] = fractions
        manifest["variants"].append(entry)

    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return manifest


def flops_per_iteration(method: str, base_problem: Optional[LinearProblem], config: ExperimentConfig) -> float:
    """Flop-model estimate: plain steps cost ~4n, subspace steps add the projector."""
    if config.generator is not None:
        n = config.generator.n
    elif base_problem is not None:
        n = base_problem.n
    else:
        return float("nan")
    rank = config.m0 if method.endswith("scrk") else 0
    return float(4 * n + 4 * rank * n)
