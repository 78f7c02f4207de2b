"""Dense real linear-algebra kernels.

Factorizations, pseudoinverses, and the row-space projector used by the
subspace-constrained solvers.  Everything operates on 2-D float64 numpy
arrays and is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, IterationFailure, RankDeficient

DEFAULT_TOL_RANK = 1e-10

__all__ = [
    "DEFAULT_TOL_RANK",
    "SvdFactors",
    "ProjectorFactorization",
    "as_matrix",
    "as_vector",
    "svd",
    "pseudoinverse",
    "build_projector",
    "project",
    "project_rows",
    "complement_basis",
    "block_pseudoinverse",
    "projected_submatrix_svd",
]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return `a` as a finite 2-D float64 array."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be nonempty, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def as_vector(v, name: str = "vector") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


@dataclass(frozen=True)
class SvdFactors:
    """Compact SVD ``a = u @ diag(sigma) @ vt`` with a fixed sign convention."""

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    def numerical_rank(self, tol_rank: float = DEFAULT_TOL_RANK) -> int:
        if self.sigma.size == 0 or self.sigma[0] == 0.0:
            return 0
        return int(np.count_nonzero(self.sigma > tol_rank * self.sigma[0]))

    def min_nonzero(self, tol_rank: float = DEFAULT_TOL_RANK) -> float:
        """Smallest singular value above the relative rank threshold."""
        r = self.numerical_rank(tol_rank)
        if r == 0:
            return 0.0
        return float(self.sigma[r - 1])


def _fix_signs(u: np.ndarray, vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # First nonzero component of each right singular vector made nonnegative,
    # so factorizations are reproducible.
    for i in range(vt.shape[0]):
        row = vt[i]
        nz = np.nonzero(row)[0]
        if nz.size and row[nz[0]] < 0:
            vt[i] = -row
            u[:, i] = -u[:, i]
    return u, vt


def svd(a) -> SvdFactors:
    """Compact SVD of a dense matrix; deterministic for a fixed input."""
    a = as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise IterationFailure(f"SVD did not converge: {exc}") from exc
    u, vt = _fix_signs(u.copy(), vt.copy())
    return SvdFactors(u=u, sigma=s, vt=vt)


def pseudoinverse(a, tol_rank: float = DEFAULT_TOL_RANK) -> np.ndarray:
    """Moore-Penrose pseudoinverse with relative rank truncation."""
    a = as_matrix(a)
    f = svd(a)
    r = f.numerical_rank(tol_rank)
    if r == 0:
        return np.zeros((a.shape[1], a.shape[0]))
    return (f.vt[:r].T / f.sigma[:r]) @ f.u[:, :r].T


@dataclass(frozen=True)
class ProjectorFactorization:
    """Orthonormal basis of the row space of a trusted block.

    Applying ``v - q_basis @ (q_basis.T @ v)`` realizes the orthogonal
    projector onto the nullspace of the block in O(rank * n) operations.
    """

    q_basis: np.ndarray  # (n, rank), orthonormal columns
    rank: int
    tol_rank: float

    @property
    def dim(self) -> int:
        return self.q_basis.shape[0]


def build_projector(a_i0, tol_rank: float = DEFAULT_TOL_RANK) -> ProjectorFactorization:
    """Orthonormal basis of Range(a_i0.T); empty block yields the identity projector."""
    a_i0 = np.asarray(a_i0, dtype=np.float64)
    if a_i0.ndim != 2:
        raise DimensionMismatch(f"block must be 2-D, got shape {a_i0.shape}")
    n = a_i0.shape[1]
    if a_i0.shape[0] == 0:
        return ProjectorFactorization(q_basis=np.zeros((n, 0)), rank=0, tol_rank=tol_rank)
    f = svd(a_i0)
    r = f.numerical_rank(tol_rank)
    return ProjectorFactorization(q_basis=f.vt[:r].T.copy(), rank=r, tol_rank=tol_rank)


def project(pf: ProjectorFactorization, v) -> np.ndarray:
    """Apply the nullspace projector to a vector."""
    v = as_vector(v)
    if v.shape[0] != pf.dim:
        raise DimensionMismatch(f"expected length {pf.dim}, got {v.shape[0]}")
    q = pf.q_basis
    return v - q @ (q.T @ v)


def project_rows(pf: ProjectorFactorization, rows) -> np.ndarray:
    """Apply the projector to every row of a matrix (rows @ P)."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != pf.dim:
        raise DimensionMismatch(f"expected (*, {pf.dim}) rows, got shape {rows.shape}")
    q = pf.q_basis
    return rows - (rows @ q) @ q.T


def complement_basis(pf: ProjectorFactorization) -> np.ndarray:
    """Orthonormal basis of Range(P), the complement of the trusted row space.

    Completed by orthogonalizing fixed-seed Gaussian columns against q_basis;
    any orthonormal complement preserves the nonzero spectrum, fixing the seed
    makes results reproducible.
    """
    n, r = pf.q_basis.shape
    d = n - r
    if d == 0:
        return np.zeros((n, 0))
    g = np.random.default_rng(0).standard_normal((n, d))
    q = pf.q_basis
    b = g - q @ (q.T @ g)
    qbar, _ = np.linalg.qr(b)
    # One re-orthogonalization pass against q_basis for numerical cleanliness.
    qbar = qbar - q @ (q.T @ qbar)
    qbar, _ = np.linalg.qr(qbar)
    return qbar


def block_pseudoinverse(a_i, a_j, tol_rank: float = DEFAULT_TOL_RANK) -> np.ndarray:
    """Pseudoinverse of the stacked matrix [a_i; a_j] assembled blockwise.

    Uses the identity pinv([X; Y]) = [pinv(X) - pinv(YP) Y pinv(X) | pinv(YP)]
    with P the nullspace projector of X, valid when the stack has full row
    rank.
    """
    a_i = as_matrix(a_i, "a_i")
    a_j = as_matrix(a_j, "a_j")
    if a_i.shape[1] != a_j.shape[1]:
        raise DimensionMismatch("blocks must have equal column counts")
    stacked = np.vstack([a_i, a_j])
    s = np.linalg.svd(stacked, compute_uv=False)
    if stacked.shape[0] > stacked.shape[1] or s[-1] <= tol_rank * s[0]:
        raise RankDeficient("stacked block matrix does not have full row rank")
    pinv_i = pseudoinverse(a_i, tol_rank)
    pf = build_projector(a_i, tol_rank)
    pinv_jp = pseudoinverse(project_rows(pf, a_j), tol_rank)
    left = pinv_i - pinv_jp @ (a_j @ pinv_i)
    return np.hstack([left, pinv_jp])


def projected_submatrix_svd(a_i1, pf: ProjectorFactorization) -> SvdFactors:
    """SVD of the projected block through the thin complement-coordinates matrix.

    The nonzero singular values of ``a_i1 @ P`` equal those of ``a_i1 @ qbar``
    where qbar spans Range(P), so the spectrum is computed from the thinner
    (m, n - rank) product.
    """
    a_i1 = as_matrix(a_i1, "a_i1")
    if a_i1.shape[1] != pf.dim:
        raise DimensionMismatch(f"expected {pf.dim} columns, got {a_i1.shape[1]}")
    qbar = complement_basis(pf)
    if qbar.shape[1] == 0:
        m = a_i1.shape[0]
        return SvdFactors(u=np.zeros((m, 0)), sigma=np.zeros(0), vt=np.zeros((0, 0)))
    return svd(a_i1 @ qbar)
