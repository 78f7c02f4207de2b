"""Iterative row-action solvers.

Four methods over a shared loop: plain randomized Kaczmarz (``rk``), the
subspace-constrained variant (``scrk``) whose iterates stay on the solution
space of a trusted row block, and their quantile-thresholded counterparts
(``quantile-rk``, ``quantile-scrk``) for systems with sparse corruptions.

The rk-family methods ignore the trusted block entirely (they sample over all
rows and start from zero); the scrk-family methods sample the non-trusted rows
and start from the minimum-norm solution of the trusted subsystem.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    AllZeroWeights,
    DegenerateDirection,
    DimensionMismatch,
    EmptyPool,
    NoAdmissibleRow,
    RankDeficient,
    ZeroRow,
)
from .linalg import (
    DEFAULT_TOL_RANK,
    ProjectorFactorization,
    as_matrix,
    as_vector,
    block_pseudoinverse,
    build_projector,
    project,
    project_rows,
    pseudoinverse,
)

METHODS = ("rk", "scrk", "quantile-rk", "quantile-scrk")
SAMPLING_MODES = ("projected-norm", "uniform-rejection")
RNG_GENERATOR = "philox"

# Iterates are re-projected onto the trusted solution space at this cadence to
# keep floating-point drift off the space bounded.
REPROJECT_EVERY = 1000

# Quantile methods keep residuals incrementally through the Gram matrix of the
# projected rows when it fits comfortably in memory; larger systems recompute
# residuals from scratch each iteration.
GRAM_ROW_LIMIT = 3000


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; one independently keyed stream per run."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


@dataclass(frozen=True)
class LinearProblem:
    """An (optionally corrupted / noisy) overdetermined linear system.

    `b` is the observed right-hand side: after corruption or noise injection
    it differs from ``a @ x_star``. `i0` indexes the trusted rows; corruption
    support never intersects it.
    """

    a: np.ndarray
    b: np.ndarray
    x_star: Optional[np.ndarray] = None
    i0: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    corruption_support: Optional[np.ndarray] = None
    noise: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        a = as_matrix(self.a, "a")
        b = as_vector(self.b, "b")
        m, n = a.shape
        if m < n:
            raise DimensionMismatch(f"system must be overdetermined or square, got {m}x{n}")
        if b.shape[0] != m:
            raise DimensionMismatch("b length must equal the row count")
        i0 = np.asarray(self.i0, dtype=np.intp)
        if i0.size and (i0.min() < 0 or i0.max() >= m or np.unique(i0).size != i0.size):
            raise ValueError("i0 must be unique indices within [0, m)")
        i0 = np.sort(i0)
        x_star = None if self.x_star is None else as_vector(self.x_star, "x_star")
        if x_star is not None and x_star.shape[0] != n:
            raise DimensionMismatch("x_star length must equal the column count")
        support = self.corruption_support
        if support is not None:
            support = np.sort(np.asarray(support, dtype=np.intp))
            if np.intersect1d(support, i0).size:
                raise ValueError("corruption support must avoid the trusted rows")
        noise = None if self.noise is None else as_vector(self.noise, "noise")
        if noise is not None and noise.shape[0] != m:
            raise DimensionMismatch("noise length must equal the row count")
        if x_star is not None and noise is None and support is None:
            if np.linalg.norm(a @ x_star - b) > 1e-8 * max(1.0, np.linalg.norm(b)):
                raise ValueError("b is inconsistent with the stated solution")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "x_star", x_star)
        object.__setattr__(self, "i0", i0)
        object.__setattr__(self, "corruption_support", support)
        object.__setattr__(self, "noise", noise)

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.a.shape[1]

    @property
    def i1(self) -> np.ndarray:
        mask = np.ones(self.m, dtype=bool)
        mask[self.i0] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True)
class SolverConfig:
    method: str
    max_iters: int
    quantile_q: Optional[float] = None
    sampling: str = "projected-norm"
    seed: int = 0
    record_every: int = 1
    stop_tol: Optional[float] = None
    tol_rank: float = DEFAULT_TOL_RANK

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.sampling not in SAMPLING_MODES:
            raise ValueError(f"unknown sampling mode {self.sampling!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.is_quantile:
            if self.quantile_q is None or not (0.0 < self.quantile_q <= 1.0):
                raise ValueError("quantile methods need quantile_q in (0, 1]")

    @property
    def is_quantile(self) -> bool:
        return self.method.startswith("quantile")

    @property
    def is_subspace(self) -> bool:
        return self.method.endswith("scrk")


@dataclass
class TraceRecord:
    k: int
    error: Optional[float]
    residual_norm: float
    quantile_threshold: Optional[float]
    seconds: float


@dataclass
class ConvergenceTrace:
    records: list[TraceRecord]
    final_x: np.ndarray
    rng_seed_used: int
    generator: str
    wall_time_seconds: float

    def errors(self) -> np.ndarray:
        return np.array([r.error if r.error is not None else np.nan for r in self.records])

    def iterations(self) -> np.ndarray:
        return np.array([r.k for r in self.records], dtype=np.intp)


def rk_step(problem: LinearProblem, x, j: int) -> np.ndarray:
    """Project x onto the hyperplane of row j."""
    x = as_vector(x)
    a_j = problem.a[j]
    nrm2 = float(a_j @ a_j)
    if nrm2 <= 0.0:
        raise ZeroRow(f"row {j} has zero norm")
    return x + ((problem.b[j] - a_j @ x) / nrm2) * a_j


def scrk_step(problem: LinearProblem, pf: ProjectorFactorization, x, j: int) -> np.ndarray:
    """Project x onto the row-j hyperplane along the projected direction.

    Requires x on the trusted solution space; the step keeps it there.
    Raises DegenerateDirection when the projected row vanishes (the row lies
    in the trusted row space), in which case the caller must resample or skip.
    """
    x = as_vector(x)
    a_j = problem.a[j]
    pa = project(pf, a_j)
    nrm2 = float(pa @ pa)
    if nrm2 <= (pf.tol_rank * np.linalg.norm(a_j)) ** 2:
        raise DegenerateDirection(f"projected row {j} vanishes")
    return x + ((problem.b[j] - a_j @ x) / nrm2) * pa


def two_step_block_update(problem: LinearProblem, pf: ProjectorFactorization, x, j_block) -> np.ndarray:
    """Projection onto the joint solution space of the trusted block plus rows j_block.

    Computed without forming the stacked pseudoinverse: first project onto the
    trusted space, then correct along the projected block. Does not require x
    to already satisfy the trusted equations.
    """
    x = as_vector(x)
    j_block = np.asarray(j_block, dtype=np.intp)
    a_i0 = problem.a[problem.i0]
    b_i0 = problem.b[problem.i0]
    a_j = problem.a[j_block]
    b_j = problem.b[j_block]
    stack = np.vstack([a_i0, a_j])
    s = np.linalg.svd(stack, compute_uv=False)
    if stack.shape[0] > stack.shape[1] or s[-1] <= pf.tol_rank * s[0]:
        raise RankDeficient("trusted block plus j_block is not full row rank")
    pinv_i0 = pseudoinverse(a_i0, pf.tol_rank)
    y = x + pinv_i0 @ (b_i0 - a_i0 @ x)
    beta = b_j - a_j @ (pinv_i0 @ b_i0)
    ajp = project_rows(pf, a_j)
    return y + pseudoinverse(ajp, pf.tol_rank) @ (beta - ajp @ y)


def sample_row(weights, rng: np.random.Generator) -> int:
    """Draw an index with probability proportional to its weight."""
    weights = np.asarray(weights, dtype=np.float64)
    cum = np.cumsum(weights)
    total = cum[-1]
    if not total > 0.0:
        raise AllZeroWeights("all sampling weights are zero")
    return int(np.searchsorted(cum, rng.random() * total, side="right"))


def quantile_threshold(residuals, q: float) -> float:
    """The k-th smallest residual magnitude, k = max(1, floor(q * len)).

    Every row with magnitude at or below the returned value is admissible, so
    the admissible set has size >= k (ties enlarge it).
    """
    r = np.abs(np.asarray(residuals, dtype=np.float64))
    k = max(1, int(q * r.size))
    return float(np.partition(r, k - 1)[k - 1])


def uniform_variant_threshold(problem: LinearProblem, pf: ProjectorFactorization, x, q: float) -> float:
    """Quantile of projected-norm-scaled residuals over the non-trusted rows.

    Rows whose projected direction vanishes are excluded from the pool.
    """
    x = as_vector(x)
    i1 = problem.i1
    a1 = problem.a[i1]
    pa = project_rows(pf, a1)
    norms = np.sqrt(np.einsum("ij,ij->i", pa, pa))
    row_norms = np.linalg.norm(a1, axis=1)
    pool = norms > pf.tol_rank * row_norms
    if not pool.any():
        raise EmptyPool("every non-trusted row is degenerate under the projector")
    res = np.abs(problem.b[i1] - a1 @ x)
    return quantile_threshold(res[pool] / norms[pool], q)


def rejection_sampling_step(
    problem: LinearProblem,
    pf: ProjectorFactorization,
    x,
    rng: np.random.Generator,
    gamma_q: float,
) -> Optional[np.ndarray]:
    """One rejection-sampled quantile step.

    Samples a non-trusted row with probability proportional to its squared
    projected norm and applies the step only if the residual clears the
    threshold; returns None on rejection. Accepted rows follow the same
    distribution as sampling restricted to the admissible set.
    """
    x = as_vector(x)
    i1 = problem.i1
    pa = project_rows(pf, problem.a[i1])
    w = np.einsum("ij,ij->i", pa, pa)
    j = int(i1[sample_row(w, rng)])
    if abs(problem.b[j] - problem.a[j] @ x) <= gamma_q:
        return scrk_step(problem, pf, x, j)
    return None


def initial_iterate(problem: LinearProblem, config: SolverConfig) -> np.ndarray:
    """Zero for the rk family; min-norm trusted-block solution for the scrk family."""
    if config.is_subspace:
        a_i0 = problem.a[problem.i0]
        if a_i0.shape[0] == 0:
            return np.zeros(problem.n)
        return pseudoinverse(a_i0, config.tol_rank) @ problem.b[problem.i0]
    return np.zeros(problem.n)


def run_solver(problem: LinearProblem, config: SolverConfig) -> ConvergenceTrace:
    """Run the configured method for a fixed iteration budget.

    The trace records iteration 0, every ``record_every``-th iteration, and
    the final iteration. With ``stop_tol`` set and a known solution, the run
    stops early once the relative error at a record point drops below it.
    """
    t0 = time.perf_counter()
    rng = make_rng(config.seed)

    if config.is_subspace:
        active = problem.i1
        pf = build_projector(problem.a[problem.i0], config.tol_rank)
    else:
        active = np.arange(problem.m, dtype=np.intp)
        pf = build_projector(np.zeros((0, problem.n)), config.tol_rank)

    a_act = problem.a[active]
    b_act = problem.b[active]
    pa = project_rows(pf, a_act)
    w = np.einsum("ij,ij->i", pa, pa)
    row_norms2 = np.einsum("ij,ij->i", a_act, a_act)
    degenerate = w <= (config.tol_rank**2) * row_norms2
    w = np.where(degenerate, 0.0, w)
    if not np.any(w > 0.0):
        raise NoAdmissibleRow("every active row is degenerate under the projector")

    x0 = initial_iterate(problem, config)
    x = x0.copy()

    i1 = problem.i1
    a_i1 = problem.a[i1]
    b_i1 = problem.b[i1]

    x_star = problem.x_star
    err0 = float(np.linalg.norm(x - x_star)) if x_star is not None else None

    records: list[TraceRecord] = []
    gamma: Optional[float] = None

    def residual_norm_i1() -> float:
        return float(np.linalg.norm(a_i1 @ x - b_i1))

    def record(k: int):
        err = float(np.linalg.norm(x - x_star)) if x_star is not None else None
        records.append(
            TraceRecord(
                k=k,
                error=err,
                residual_norm=residual_norm_i1(),
                quantile_threshold=gamma if config.is_quantile else None,
                seconds=time.perf_counter() - t0,
            )
        )
        return err

    record(0)

    quantile = config.is_quantile
    uniform = config.sampling == "uniform-rejection"
    use_gram = quantile and a_act.shape[0] <= GRAM_ROW_LIMIT
    if quantile:
        res = b_act - a_act @ x
        if use_gram:
            gram = a_act @ pa.T
        pool = np.flatnonzero(~degenerate)
        w_pool = w[pool]
        norms_pool = np.sqrt(w_pool)
    else:
        cum_w = np.cumsum(w)
        total_w = cum_w[-1]

    for k in range(1, config.max_iters + 1):
        if quantile:
            if uniform:
                gamma = quantile_threshold(res[pool] / norms_pool, config.quantile_q)
                pos = int(rng.integers(pool.size))
                j = int(pool[pos])
                accepted = abs(res[j]) <= gamma * norms_pool[pos]
            else:
                abs_res = np.abs(res)
                gamma = quantile_threshold(abs_res, config.quantile_q)
                wj = np.where(abs_res <= gamma, w, 0.0)
                cum = np.cumsum(wj)
                if not cum[-1] > 0.0:
                    raise NoAdmissibleRow(
                        f"iteration {k}: every admissible row is degenerate"
                    )
                j = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
                accepted = True
            if accepted:
                tau = res[j] / w[j]
                x += tau * pa[j]
                if use_gram:
                    res -= tau * gram[:, j]
                else:
                    res = b_act - a_act @ x
        else:
            j = int(np.searchsorted(cum_w, rng.random() * total_w, side="right"))
            a_j = a_act[j]
            x += ((b_act[j] - a_j @ x) / w[j]) * pa[j]

        if k % REPROJECT_EVERY == 0:
            # Correct floating-point drift off the trusted solution space.
            x = x0 + project(pf, x - x0)
            if quantile:
                res = b_act - a_act @ x

        if k % config.record_every == 0 or k == config.max_iters:
            err = record(k)
            if (
                config.stop_tol is not None
                and err is not None
                and err0 is not None
                and err0 > 0.0
                and err <= config.stop_tol * err0
            ):
                break

    return ConvergenceTrace(
        records=records,
        final_x=x,
        rng_seed_used=config.seed,
        generator=RNG_GENERATOR,
        wall_time_seconds=time.perf_counter() - t0,
    )
