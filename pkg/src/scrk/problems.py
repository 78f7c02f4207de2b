"""Experimental instance generators.

Random matrix families, structured coherent constructions, noise and
corruption injection, a discretized second-derivative system with competing
initial conditions, and a parallel-beam CT problem. Generation is
deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidSpec, TooManyCorruptions
from .solvers import LinearProblem
from .tomography import parallel_beam_matrix, phantom_image

FAMILIES = (
    "gaussian",
    "normalized-gaussian",
    "uniform",
    "correlated-mean",
    "low-rank-coherent",
)


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    m: int
    n: int
    seed: int = 0
    lo: float = 0.9  # uniform entry bounds
    hi: float = 1.1
    rank: int = 20  # low-rank-coherent: size of the generating top block
    epsilon: float = 0.1  # coherent constructions: off-space component size
    block: int = 0  # correlated-mean: number of nearly collinear rows

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.m < self.n or self.n < 1:
            raise InvalidSpec(f"need m >= n >= 1, got {self.m}x{self.n}")
        if self.family == "uniform" and not self.lo <= self.hi:
            raise InvalidSpec("uniform family needs lo <= hi")
        if self.family == "low-rank-coherent":
            if not 0 < self.epsilon < 1:
                raise InvalidSpec("epsilon must lie in (0, 1)")
            if not 1 <= self.rank < self.n:
                raise InvalidSpec("rank must satisfy 1 <= rank < n")
        if self.family == "correlated-mean":
            if self.m != self.n:
                raise InvalidSpec("correlated-mean construction is square")
            if not 1 <= self.block < self.n:
                raise InvalidSpec("block must satisfy 1 <= block < n")
            if not 0 < self.epsilon < 1:
                raise InvalidSpec("epsilon must lie in (0, 1)")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class CorruptionSpec:
    """Sparse additive corruption: support uniform over the non-trusted rows."""

    count_c: int
    law: str = "uniform-symmetric"  # U[-amplitude, amplitude]; or "uniform-range"
    amplitude: float = 1.0
    lo: float = 0.0
    hi: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.count_c < 0:
            raise InvalidSpec("count_c must be >= 0")
        if self.law not in ("uniform-symmetric", "uniform-range"):
            raise InvalidSpec(f"unknown corruption law {self.law!r}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def generate(spec: GeneratorSpec) -> LinearProblem:
    """Build a consistent problem from a random-family spec."""
    rng = np.random.default_rng(spec.seed)
    m, n = spec.m, spec.n

    if spec.family == "gaussian":
        a = rng.standard_normal((m, n))
    elif spec.family == "normalized-gaussian":
        a = rng.standard_normal((m, n))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
    elif spec.family == "uniform":
        a = rng.uniform(spec.lo, spec.hi, size=(m, n))
    elif spec.family == "correlated-mean":
        basis, _ = np.linalg.qr(rng.standard_normal((n, n)))
        u = basis[:, : spec.block].T
        c = basis[:, spec.block :].T
        u_bar = u.mean(axis=0)
        a = np.vstack([(1 - spec.epsilon) * u_bar + spec.epsilon * u, c])
    elif spec.family == "low-rank-coherent":
        top = rng.standard_normal((spec.rank, n))
        top /= np.linalg.norm(top, axis=1, keepdims=True)
        q, _ = np.linalg.qr(top.T)  # orthonormal basis of the top-row span
        parents = rng.integers(spec.rank, size=m - spec.rank)
        g = rng.standard_normal((m - spec.rank, n))
        g -= (g @ q) @ q.T
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        a = np.vstack([top, (1 - spec.epsilon) * top[parents] + spec.epsilon * g])
    else:  # pragma: no cover - guarded by the spec validator
        raise InvalidSpec(spec.family)

    x_star = rng.standard_normal(n)
    return LinearProblem(a=a, b=a @ x_star, x_star=x_star, metadata={"generator": spec.to_dict()})


def with_trusted_block(problem: LinearProblem, i0) -> LinearProblem:
    """Copy of the problem with the trusted row set replaced."""
    return replace(problem, i0=np.asarray(i0, dtype=np.intp))


def add_noise(problem: LinearProblem, law: str = "uniform", scale: float = 0.01, seed: int = 0,
              i1_only: bool = False) -> LinearProblem:
    """Perturb the right-hand side: b + r with r entrywise U[-scale, scale] or N(0, scale^2)."""
    if scale == 0.0:
        return problem
    rng = np.random.default_rng(seed)
    m = problem.m
    if law == "uniform":
        r = rng.uniform(-scale, scale, size=m)
    elif law == "gaussian":
        r = scale * rng.standard_normal(m)
    else:
        raise InvalidSpec(f"unknown noise law {law!r}; expected 'uniform' or 'gaussian'")
    if i1_only:
        r[problem.i0] = 0.0
    return replace(problem, b=problem.b + r, noise=r)


def add_corruptions(problem: LinearProblem, spec: CorruptionSpec) -> LinearProblem:
    """Corrupt a uniformly drawn subset of the non-trusted rows."""
    if spec.count_c == 0:
        return problem
    i1 = problem.i1
    if spec.count_c > i1.size:
        raise TooManyCorruptions(f"requested {spec.count_c} corruptions but only {i1.size} non-trusted rows")
    rng = np.random.default_rng(spec.seed)
    support = np.sort(rng.choice(i1, size=spec.count_c, replace=False))
    if spec.law == "uniform-symmetric":
        bump = rng.uniform(-spec.amplitude, spec.amplitude, size=spec.count_c)
    else:
        bump = rng.uniform(spec.lo, spec.hi, size=spec.count_c)
    b = problem.b.copy()
    b[support] += bump
    return replace(problem, b=b, corruption_support=support)


def ode_line_system(
    grid_points: int = 100,
    line1_indices=None,
    line2_indices=None,
) -> LinearProblem:
    """Discretized y'' = 0 with two inconsistent sets of initial conditions.

    The trusted block holds the normalized second-difference rows (they
    annihilate every affine function). Condition rows are grid indicators:
    Line 1 pins y = x, Line 2 pins y = 25 - x/2; the two candidate solution
    vectors and their row groups are stored in the metadata. Condition
    placement biases which line the quantile method locks onto, so the
    index sets are exposed as parameters.
    """
    g = grid_points
    if line1_indices is None:
        # Spread over the upper half: far from the zero initial iterate (so the
        # low-quantile run prefers Line 2) yet wide enough for a fast restricted
        # rate once the high-quantile run locks onto Line 1.
        line1_indices = np.arange(54, 100, 5)
    if line2_indices is None:
        # Around the zero-crossing of Line 2, where its residuals start small.
        line2_indices = np.arange(48, 53)
    line1_indices = np.asarray(line1_indices, dtype=np.intp)
    line2_indices = np.asarray(line2_indices, dtype=np.intp)
    if np.intersect1d(line1_indices, line2_indices).size:
        raise InvalidSpec("condition placements must not overlap")

    grid = np.arange(g, dtype=np.float64)
    line1 = grid.copy()
    line2 = 25.0 - grid / 2.0

    toeplitz = np.zeros((g - 2, g))
    for i in range(g - 2):
        toeplitz[i, i : i + 3] = (1.0, -2.0, 1.0)
    toeplitz /= np.sqrt(6.0)

    cond1 = np.zeros((line1_indices.size, g))
    cond1[np.arange(line1_indices.size), line1_indices] = 1.0
    cond2 = np.zeros((line2_indices.size, g))
    cond2[np.arange(line2_indices.size), line2_indices] = 1.0

    a = np.vstack([toeplitz, cond1, cond2])
    b = np.concatenate([np.zeros(g - 2), line1[line1_indices], line2[line2_indices]])
    n0 = g - 2
    metadata = {
        "line1": line1,
        "line2": line2,
        "line1_rows": np.arange(n0, n0 + line1_indices.size),
        "line2_rows": np.arange(n0 + line1_indices.size, a.shape[0]),
    }
    return LinearProblem(a=a, b=b, i0=np.arange(n0), metadata=metadata)


def ct_system(n_img: int = 50, angle_step_deg: float = 2.0, n_rays: int = 50, seed: int = 0) -> LinearProblem:
    """Phantom sinogram problem: exact ray-pixel intersection lengths, b = A vec(image).

    Rays that miss the grid are dropped; the surviving (angle, ray) indices
    are recorded in the metadata together with the phantom image.
    """
    a, kept = parallel_beam_matrix(n_img, angle_step_deg, n_rays)
    image = phantom_image(n_img)
    x_star = image.ravel()
    metadata = {
        "kept_rows": kept,
        "phantom": image,
        "n_img": n_img,
        "angle_step_deg": angle_step_deg,
        "n_rays": n_rays,
        "seed": seed,
    }
    return LinearProblem(a=a, b=a @ x_star, x_star=x_star, metadata=metadata)
