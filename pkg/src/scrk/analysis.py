"""Spectral quantities and theoretical bounds for the solver family.

Computes per-iteration contraction rates, the noisy error horizon, the
coherence-based rate bound, worst-case row-subset spectra (exact enumeration
or flagged sampled estimates), the corrupted-regime contraction constant, and
leverage-score diagnostics for trusted-block selection.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .errors import (
    CombinatorialBlowup,
    InvalidQuantileBeta,
    InvalidSpec,
    RankDeficient,
    ZeroRow,
)
from .linalg import (
    DEFAULT_TOL_RANK,
    ProjectorFactorization,
    as_matrix,
    build_projector,
    complement_basis,
    project_rows,
    projected_submatrix_svd,
    pseudoinverse,
    svd,
)

EXACT_SUBSET_CAP = 10**6
SAMPLED_SUBSET_COUNT = 10**4


@dataclass(frozen=True)
class SpectralReport:
    """Contraction rates and the spectra they are built from."""

    sigma_min_plus_proj: float
    frob_proj: float
    sigma_max_proj: float
    sigma_min_full: float
    frob_full: float
    scrk_rate: float
    rk_rate: float
    coherence_delta: float
    effective_aspect_ratio: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class HorizonReport:
    """Asymptotic mean-squared-error floor for noisy measurements."""

    gamma0: float
    gamma1: float
    rate: float
    sigma_min_i0: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class CorruptionBoundReport:
    """Deterministic convergence certificate for the quantile method."""

    q: float
    beta: float
    sigma_qb_min: float
    z_qb: float
    sigma_max: float
    c_qb: float
    condition_lhs: float
    condition_rhs: float
    converges_guaranteed: bool
    certified: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class SubsetSpectrum:
    """Worst-case subset minimum singular value; `certified` marks exact enumeration."""

    value: float
    certified: bool


def _split(a, i0):
    a = as_matrix(a)
    i0 = np.sort(np.asarray(i0, dtype=np.intp))
    mask = np.ones(a.shape[0], dtype=bool)
    if i0.size:
        mask[i0] = False
    return a[i0], a[mask]


def scrk_rate_bound(a, i0, tol_rank: float = DEFAULT_TOL_RANK) -> SpectralReport:
    """Per-iteration contraction bounds for the subspace-constrained and plain methods."""
    a = as_matrix(a)
    m, n = a.shape
    f_full = svd(a)
    if f_full.numerical_rank(tol_rank) < n:
        raise RankDeficient("matrix must have full numerical column rank")
    a_i0, a_i1 = _split(a, i0)
    m0 = a_i0.shape[0]
    pf = build_projector(a_i0, tol_rank)

    f_proj = projected_submatrix_svd(a_i1, pf)
    sigma_min_plus = f_proj.min_nonzero(tol_rank)
    sigma_max_proj = float(f_proj.sigma[0]) if f_proj.sigma.size else 0.0
    frob_proj = float(np.linalg.norm(f_proj.sigma))

    sigma_min_full = float(f_full.sigma[-1])
    frob_full = float(np.linalg.norm(f_full.sigma))

    scrk_rate = 1.0 - (sigma_min_plus / frob_proj) ** 2 if frob_proj > 0 else 0.0
    rk_rate = 1.0 - (sigma_min_full / frob_full) ** 2

    pa = project_rows(pf, a_i1)
    ratios = np.einsum("ij,ij->i", pa, pa) / np.einsum("ij,ij->i", a_i1, a_i1)
    delta2 = max(0.0, 1.0 - float(ratios.max()))
    ear = float("inf") if n == m0 else (m - m0) / (n - m0)

    return SpectralReport(
        sigma_min_plus_proj=sigma_min_plus,
        frob_proj=frob_proj,
        sigma_max_proj=sigma_max_proj,
        sigma_min_full=sigma_min_full,
        frob_full=frob_full,
        scrk_rate=scrk_rate,
        rk_rate=rk_rate,
        coherence_delta=float(np.sqrt(delta2)),
        effective_aspect_ratio=ear,
    )


def noisy_horizon(a, i0, noise_r, tol_rank: float = DEFAULT_TOL_RANK) -> HorizonReport:
    """Error-horizon terms for measurements perturbed by the given noise vector.

    The trusted block must have full row rank; its noise shifts the solution
    space, the remaining noise enters through the projected spectrum.
    """
    a = as_matrix(a)
    r = np.asarray(noise_r, dtype=np.float64)
    if r.shape[0] != a.shape[0]:
        raise ValueError("noise vector length must equal the row count")
    a_i0, a_i1 = _split(a, i0)
    i0 = np.sort(np.asarray(i0, dtype=np.intp))
    mask = np.ones(a.shape[0], dtype=bool)
    if i0.size:
        mask[i0] = False
    r_i0, r_i1 = r[i0], r[mask]

    pf = build_projector(a_i0, tol_rank)
    sigma_min_plus = projected_submatrix_svd(a_i1, pf).min_nonzero(tol_rank)
    frob_proj = float(np.linalg.norm(project_rows(pf, a_i1)))
    rate = 1.0 - (sigma_min_plus / frob_proj) ** 2 if frob_proj > 0 else 0.0

    if a_i0.shape[0] == 0:
        gamma0 = 0.0
        sigma_min_i0 = 0.0
        shift = np.zeros(a.shape[1])
    else:
        f0 = svd(a_i0)
        if f0.numerical_rank(tol_rank) < a_i0.shape[0]:
            raise RankDeficient("trusted block must have full row rank")
        sigma_min_i0 = float(f0.sigma[-1])
        shift = pseudoinverse(a_i0, tol_rank) @ r_i0
        gamma0 = 2.0 * float(r_i0 @ r_i0) / sigma_min_i0**2 - float(shift @ shift)

    resid = r_i1 - a_i1 @ shift
    gamma1 = float(resid @ resid) / sigma_min_plus**2 if sigma_min_plus > 0 else 0.0
    return HorizonReport(gamma0=gamma0, gamma1=gamma1, rate=rate, sigma_min_i0=sigma_min_i0)


def coherence_rate_bound(a, i0, pf: ProjectorFactorization) -> float:
    """Rate bound driven by the coherence between the trusted block and the rest.

    delta^2 = 1 - max_j ||P a_j||^2 / ||a_j||^2 over the non-trusted rows; the
    returned rate 1 - sigma_min(A)^2 / ((1 - delta^2) ||A||_F^2) is clamped to
    [0, 1).
    """
    a = as_matrix(a)
    _, a_i1 = _split(a, i0)
    norms2 = np.einsum("ij,ij->i", a_i1, a_i1)
    if np.any(norms2 <= 0.0):
        raise ZeroRow("every non-trusted row must be nonzero")
    pa = project_rows(pf, a_i1)
    max_ratio = float((np.einsum("ij,ij->i", pa, pa) / norms2).max())
    sv = svd(a)
    base = (sv.sigma[-1] / np.linalg.norm(sv.sigma)) ** 2
    if max_ratio <= 0.0:
        return 0.0
    rate = 1.0 - base / max_ratio
    return float(min(max(rate, 0.0), np.nextafter(1.0, 0.0)))


def _subset_size(alpha: float, m1: int) -> int:
    k = int(alpha * m1)
    if k < 1:
        raise InvalidSpec(f"alpha={alpha} leaves no rows: floor(alpha * {m1}) < 1")
    return min(k, m1)


def _min_nonzero_sv(mat, tol_rank: float) -> float:
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0.0
    nz = sv[sv > tol_rank * sv[0]]
    return float(nz[-1]) if nz.size else 0.0


def subset_min_singular(
    a,
    i0,
    pf: ProjectorFactorization,
    alpha: float,
    mode: str = "exact",
    max_subsets: int = EXACT_SUBSET_CAP,
    samples: int = SAMPLED_SUBSET_COUNT,
    seed: int = 0,
) -> SubsetSpectrum:
    """Worst minimum nonzero singular value over row subsets of the projected block.

    Exact mode enumerates all subsets of size floor(alpha * |I1|) (guarded by
    `max_subsets`); sampled mode draws random subsets and reports an upper
    bound on the infimum, flagged as non-certified.
    """
    a = as_matrix(a)
    _, a_i1 = _split(a, i0)
    m1 = a_i1.shape[0]
    k = _subset_size(alpha, m1)
    thin = a_i1 @ complement_basis(pf) if pf.rank else a_i1
    if mode == "exact":
        total = comb(m1, k)
        if total > max_subsets:
            raise CombinatorialBlowup(
                f"C({m1}, {k}) = {total} subsets exceeds the cap {max_subsets}"
            )
        value = min(
            _min_nonzero_sv(thin[list(t)], pf.tol_rank) for t in combinations(range(m1), k)
        )
        return SubsetSpectrum(value=float(value), certified=True)
    if mode == "sampled":
        rng = np.random.default_rng(seed)
        value = min(
            _min_nonzero_sv(thin[rng.choice(m1, size=k, replace=False)], pf.tol_rank)
            for _ in range(samples)
        )
        return SubsetSpectrum(value=float(value), certified=False)
    raise InvalidSpec(f"unknown mode {mode!r}; expected 'exact' or 'sampled'")


def subset_max_frobenius(a, i0, pf: ProjectorFactorization, alpha: float) -> float:
    """Largest squared Frobenius norm over row subsets of the projected block.

    The supremum is attained by the largest projected row norms, so the exact
    value is the sum of the top-k of them.
    """
    a = as_matrix(a)
    _, a_i1 = _split(a, i0)
    k = _subset_size(alpha, a_i1.shape[0])
    pa = project_rows(pf, a_i1)
    w = np.einsum("ij,ij->i", pa, pa)
    return float(np.sort(w)[-k:].sum())


def corruption_bound(
    a,
    i0,
    pf: ProjectorFactorization,
    q: float,
    beta: float,
    mode: str = "exact",
    max_subsets: int = EXACT_SUBSET_CAP,
    samples: int = SAMPLED_SUBSET_COUNT,
    seed: int = 0,
) -> CorruptionBoundReport:
    """Contraction constant of the quantile method under a corruption fraction beta.

    Positive values certify expected linear convergence; the certificate is
    only as strong as the subset quantity backing it (`certified` is False
    when the sampled estimate was used).
    """
    if not (beta < q < 1.0 - beta) or beta < 0.0:
        raise InvalidQuantileBeta(f"need 0 <= beta < q < 1 - beta, got q={q}, beta={beta}")
    a = as_matrix(a)
    _, a_i1 = _split(a, i0)
    alpha = q - beta
    sub = subset_min_singular(a, i0, pf, alpha, mode=mode, max_subsets=max_subsets, samples=samples, seed=seed)
    z_qb = subset_max_frobenius(a, i0, pf, alpha)
    f_proj = projected_submatrix_svd(a_i1, pf)
    sigma_max = float(f_proj.sigma[0]) if f_proj.sigma.size else 0.0
    ratio = beta / (1.0 - q)
    rhs = ratio + 2.0 * np.sqrt(ratio)
    lhs = (sub.value / sigma_max) ** 2 if sigma_max > 0 else 0.0
    c_qb = (sub.value**2 - sigma_max**2 * rhs) / z_qb if z_qb > 0 else 0.0
    return CorruptionBoundReport(
        q=q,
        beta=beta,
        sigma_qb_min=sub.value,
        z_qb=z_qb,
        sigma_max=sigma_max,
        c_qb=float(c_qb),
        condition_lhs=float(lhs),
        condition_rhs=float(rhs),
        converges_guaranteed=bool(lhs > rhs),
        certified=sub.certified,
    )


def leverage_scores(a, r: int, tol_rank: float = DEFAULT_TOL_RANK) -> np.ndarray:
    """Rank-r leverage scores: squared row norms of the top-r left singular block."""
    a = as_matrix(a)
    f = svd(a)
    if r < 1 or r > f.numerical_rank(tol_rank):
        raise RankDeficient(f"target rank {r} exceeds the numerical rank")
    u_r = f.u[:, :r]
    return np.einsum("ij,ij->i", u_r, u_r)


def sample_good_subset(a, r: int, count_c: int, scheme: str, rng: np.random.Generator) -> np.ndarray:
    """Sample trusted-block candidates by squared row norms or leverage scores.

    Draws `count_c` rows independently with replacement and returns the sorted
    set of distinct indices.
    """
    a = as_matrix(a)
    if count_c < 1:
        raise InvalidSpec("count_c must be >= 1")
    if scheme == "norm":
        p = np.einsum("ij,ij->i", a, a)
    elif scheme == "leverage":
        p = leverage_scores(a, r)
    else:
        raise InvalidSpec(f"unknown scheme {scheme!r}; expected 'norm' or 'leverage'")
    p = p / p.sum()
    draws = rng.choice(a.shape[0], size=count_c, replace=True, p=p)
    return np.unique(draws)
