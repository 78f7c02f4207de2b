import numpy as np
import pytest
from itertools import combinations

from scrk.analysis import (
    coherence_rate_bound,
    corruption_bound,
    leverage_scores,
    noisy_horizon,
    sample_good_subset,
    scrk_rate_bound,
    subset_max_frobenius,
    subset_min_singular,
)
from scrk.errors import (
    CombinatorialBlowup,
    InvalidQuantileBeta,
    RankDeficient,
    ZeroRow,
)
from scrk.linalg import build_projector


def dense_projector(a_i0, n):
    if a_i0.shape[0] == 0:
        return np.eye(n)
    return np.eye(n) - np.linalg.pinv(a_i0) @ a_i0


def almost_collinear_example(eps=0.1, n=6, m0=3, seed=0):
    """Square system whose trusted rows are nearly collinear while the
    projected remainder is perfectly conditioned."""
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((n, n)))
    u = basis[:, :m0].T
    c = basis[:, m0:].T
    u_bar = u.mean(axis=0)
    a = np.vstack([(1 - eps) * u_bar + eps * u, c])
    return a, np.arange(m0)


class TestScrkRateBound:
    def test_identity_no_trusted_rows(self):
        rep = scrk_rate_bound(np.eye(4), np.zeros(0, dtype=int))
        assert np.isclose(rep.scrk_rate, 1 - 1 / 4)
        assert np.isclose(rep.rk_rate, 1 - 1 / 4)

    def test_identity_with_trusted_coordinates(self):
        rep = scrk_rate_bound(np.eye(5), np.array([0, 1]))
        assert np.isclose(rep.scrk_rate, 1 - 1 / 3)

    def test_almost_collinear_construction(self):
        eps = 0.1
        a, i0 = almost_collinear_example(eps=eps)
        rep = scrk_rate_bound(a, i0)
        assert np.isclose(rep.sigma_min_plus_proj, 1.0, atol=1e-10)
        assert rep.sigma_min_full <= eps + 1e-12
        # dense SVD verification of the projected block spectrum
        p = dense_projector(a[i0], 6)
        dense = np.linalg.svd(a[3:] @ p, compute_uv=False)
        assert np.isclose(dense[dense > 1e-10][-1], 1.0, atol=1e-10)

    def test_rate_dominance_random(self):
        rng = np.random.default_rng(100)
        for _ in range(100):
            m, n = int(rng.integers(4, 16)), int(rng.integers(2, 8))
            if m < n:
                m, n = n, m
            a = rng.standard_normal((m, n))
            m0 = int(rng.integers(0, min(m - n + 1, n)))
            i0 = rng.choice(m, size=m0, replace=False)
            rep = scrk_rate_bound(a, i0)
            assert rep.scrk_rate <= rep.rk_rate + 1e-12
            assert 0.0 <= rep.scrk_rate < 1.0
            assert rep.sigma_min_plus_proj >= rep.sigma_min_full - 1e-10

    def test_rank_deficient_rejected(self):
        a = np.ones((4, 2))
        with pytest.raises(RankDeficient):
            scrk_rate_bound(a, np.zeros(0, dtype=int))

    def test_effective_aspect_ratio(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((10, 4))
        rep = scrk_rate_bound(a, np.array([0, 1]))
        assert np.isclose(rep.effective_aspect_ratio, 8 / 2)


class TestNoisyHorizon:
    def test_zero_noise(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((6, 3))
        rep = noisy_horizon(a, np.array([0]), np.zeros(6))
        assert rep.gamma0 == 0.0 and rep.gamma1 == 0.0

    def test_noise_only_outside_trusted_block(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((6, 3))
        i0 = np.array([0, 1])
        r = rng.standard_normal(6) * 0.01
        r[i0] = 0.0
        rep = noisy_horizon(a, i0, r)
        assert rep.gamma0 == 0.0
        mask = np.ones(6, bool)
        mask[i0] = False
        pf = build_projector(a[i0])
        p = dense_projector(a[i0], 3)
        smin = np.linalg.svd(a[mask] @ p, compute_uv=False)
        smin = smin[smin > 1e-10][-1]
        assert np.isclose(rep.gamma1, np.linalg.norm(r[mask]) ** 2 / smin**2, rtol=1e-8)

    def test_mixed_noise_formula_oracle(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((6, 3))
        i0 = np.array([1, 4])
        r = rng.standard_normal(6) * 0.05
        rep = noisy_horizon(a, i0, r)
        mask = np.ones(6, bool)
        mask[i0] = False
        pinv0 = np.linalg.pinv(a[i0])
        s0 = np.linalg.svd(a[i0], compute_uv=False)
        gamma0 = 2 * np.linalg.norm(r[i0]) ** 2 / s0[-1] ** 2 - np.linalg.norm(pinv0 @ r[i0]) ** 2
        sv = np.linalg.svd(a[mask] @ dense_projector(a[i0], 3), compute_uv=False)
        smin = sv[sv > 1e-10][-1]
        gamma1 = np.linalg.norm(r[mask] - a[mask] @ pinv0 @ r[i0]) ** 2 / smin**2
        assert np.isclose(rep.gamma0, gamma0, rtol=1e-10)
        assert np.isclose(rep.gamma1, gamma1, rtol=1e-10)
        assert rep.gamma0 >= 0.0 and rep.gamma1 >= 0.0

    def test_row_rank_deficient_trusted_block(self):
        a = np.vstack([np.eye(3), np.eye(3)])
        with pytest.raises(RankDeficient):
            noisy_horizon(a, np.array([0, 3]), np.zeros(6))


class TestCoherenceRateBound:
    def test_orthogonal_rows_reduce_to_rk_rate(self):
        a = np.eye(4)
        i0 = np.array([0])
        pf = build_projector(a[i0])
        rate = coherence_rate_bound(a, i0, pf)
        rep = scrk_rate_bound(a, i0)
        assert np.isclose(rate, rep.rk_rate)

    def test_unit_coherent_construction(self):
        # Unit rows at angle arcsin(eps) from the trusted space: the projected
        # norm ratio is exactly eps and delta^2 = 1 - eps^2.
        eps = 0.1
        rng = np.random.default_rng(4)
        n, m0 = 8, 3
        basis, _ = np.linalg.qr(rng.standard_normal((n, n)))
        u = basis[:, :m0]
        c = basis[:, m0:]
        rows = []
        for j in range(n - m0):
            v = u @ rng.standard_normal(m0)
            v /= np.linalg.norm(v)
            rows.append(np.sqrt(1 - eps**2) * v + eps * c[:, j])
        a = np.vstack([u.T, rows])
        i0 = np.arange(m0)
        pf = build_projector(a[i0])
        pa = a[m0:] - (a[m0:] @ pf.q_basis) @ pf.q_basis.T
        ratios = np.linalg.norm(pa, axis=1) / np.linalg.norm(a[m0:], axis=1)
        np.testing.assert_allclose(ratios, eps, rtol=1e-10)
        rep = scrk_rate_bound(a, i0)
        assert np.isclose(rep.coherence_delta**2, 1 - eps**2, atol=1e-10)

    def test_single_row_correlation_identity(self):
        rng = np.random.default_rng(5)
        a_i = rng.standard_normal(5)
        a_i /= np.linalg.norm(a_i)
        a_j = rng.standard_normal(5)
        a_j /= np.linalg.norm(a_j)
        pf = build_projector(a_i[None, :])
        pa_j = a_j - pf.q_basis @ (pf.q_basis.T @ a_j)
        assert np.isclose(pa_j @ pa_j, 1 - (a_i @ a_j) ** 2, atol=1e-12)

    def test_zero_row_rejected(self):
        a = np.vstack([np.eye(2), np.zeros((1, 2))])
        i0 = np.array([0])
        pf = build_projector(a[i0])
        with pytest.raises(ZeroRow):
            coherence_rate_bound(a, i0, pf)

    def test_clamped_to_unit_interval(self):
        rng = np.random.default_rng(6)
        for seed in range(20):
            a = np.random.default_rng(seed).standard_normal((6, 3))
            i0 = np.array([0])
            pf = build_projector(a[i0])
            rate = coherence_rate_bound(a, i0, pf)
            assert 0.0 <= rate < 1.0


class TestSubsetSpectra:
    def test_alpha_one_is_whole_block(self):
        rng = np.random.default_rng(8)
        a = rng.standard_normal((7, 4))
        i0 = np.array([0])
        pf = build_projector(a[i0])
        got = subset_min_singular(a, i0, pf, 1.0)
        assert got.certified
        rep = scrk_rate_bound(a, i0)
        assert np.isclose(got.value, rep.sigma_min_plus_proj, rtol=1e-10)

    def test_orthonormal_rows_value_one(self):
        a = np.eye(5)
        i0 = np.zeros(0, dtype=int)
        pf = build_projector(np.zeros((0, 5)))
        for alpha in (0.2, 0.6, 1.0):
            got = subset_min_singular(a, i0, pf, alpha)
            assert np.isclose(got.value, 1.0, atol=1e-12)

    def test_exact_double_oracle(self):
        rng = np.random.default_rng(9)
        a = rng.standard_normal((8, 4))
        i0 = np.array([2])
        pf = build_projector(a[i0])
        got = subset_min_singular(a, i0, pf, 0.5)
        # second path: dense product, brute-force over subsets
        mask = np.ones(8, bool)
        mask[2] = False
        b = a[mask] @ dense_projector(a[i0], 4)
        k = int(0.5 * 7)
        expected = np.inf
        for t in combinations(range(7), k):
            sv = np.linalg.svd(b[list(t)], compute_uv=False)
            nz = sv[sv > 1e-10 * sv[0]]
            expected = min(expected, nz[-1] if nz.size else 0.0)
        assert np.isclose(got.value, expected, rtol=1e-8)

    def test_monotone_in_alpha(self):
        rng = np.random.default_rng(10)
        a = rng.standard_normal((9, 3))
        i0 = np.array([0])
        pf = build_projector(a[i0])
        values = [subset_min_singular(a, i0, pf, al).value for al in (0.25, 0.5, 0.75, 1.0)]
        assert all(v1 <= v2 + 1e-12 for v1, v2 in zip(values, values[1:]))

    def test_combinatorial_blowup(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((30, 3))
        pf = build_projector(np.zeros((0, 3)))
        with pytest.raises(CombinatorialBlowup):
            subset_min_singular(a, np.zeros(0, dtype=int), pf, 0.5, max_subsets=100)

    def test_sampled_mode_upper_bounds_exact(self):
        rng = np.random.default_rng(12)
        a = rng.standard_normal((9, 4))
        i0 = np.array([1])
        pf = build_projector(a[i0])
        exact = subset_min_singular(a, i0, pf, 0.5)
        sampled = subset_min_singular(a, i0, pf, 0.5, mode="sampled", samples=50)
        assert not sampled.certified
        assert sampled.value >= exact.value - 1e-12

    def test_frobenius_alpha_one(self):
        rng = np.random.default_rng(13)
        a = rng.standard_normal((7, 3))
        i0 = np.array([0])
        pf = build_projector(a[i0])
        rep = scrk_rate_bound(a, i0)
        assert np.isclose(subset_max_frobenius(a, i0, pf, 1.0), rep.frob_proj**2, rtol=1e-10)

    def test_frobenius_equal_norms(self):
        a = np.eye(6) * 2.0
        pf = build_projector(np.zeros((0, 6)))
        got = subset_max_frobenius(a, np.zeros(0, dtype=int), pf, 0.5)
        assert np.isclose(got, 3 * 4.0)

    def test_frobenius_exhaustive_oracle(self):
        rng = np.random.default_rng(14)
        a = rng.standard_normal((8, 4))
        i0 = np.array([3])
        pf = build_projector(a[i0])
        got = subset_max_frobenius(a, i0, pf, 0.5)
        mask = np.ones(8, bool)
        mask[3] = False
        b = a[mask] @ dense_projector(a[i0], 4)
        k = int(0.5 * 7)
        expected = max(
            (b[list(t)] ** 2).sum() for t in combinations(range(7), k)
        )
        assert np.isclose(got, expected, rtol=1e-10)

    def test_frobenius_closed_form_all_sizes(self):
        rng = np.random.default_rng(15)
        for m in (5, 8, 12):
            a = rng.standard_normal((m, 4))
            i0 = np.zeros(0, dtype=int)
            pf = build_projector(np.zeros((0, 4)))
            w = np.einsum("ij,ij->i", a, a)
            for k in range(1, m + 1):
                got = subset_max_frobenius(a, i0, pf, k / m)
                expected = max((w[list(t)]).sum() for t in combinations(range(m), k))
                assert np.isclose(got, expected, rtol=1e-10)


class TestCorruptionBound:
    def test_zero_beta_reduction(self):
        rng = np.random.default_rng(16)
        a = rng.standard_normal((8, 3))
        i0 = np.array([0])
        pf = build_projector(a[i0])
        rep = corruption_bound(a, i0, pf, q=0.5, beta=0.0)
        assert rep.condition_rhs == 0.0
        s = subset_min_singular(a, i0, pf, 0.5)
        z = subset_max_frobenius(a, i0, pf, 0.5)
        assert np.isclose(rep.c_qb, s.value**2 / z, rtol=1e-10)
        assert rep.converges_guaranteed == (s.value > 0)

    def test_orthonormal_rows_closed_form(self):
        a = np.eye(6)
        i0 = np.zeros(0, dtype=int)
        pf = build_projector(np.zeros((0, 6)))
        rep = corruption_bound(a, i0, pf, q=0.5, beta=0.1)
        assert np.isclose(rep.condition_lhs, 1.0, atol=1e-12)
        assert np.isclose(rep.condition_rhs, 0.2 + 2 * np.sqrt(0.2))
        assert not rep.converges_guaranteed

    def test_hand_composed_formula(self):
        rng = np.random.default_rng(17)
        a = rng.standard_normal((10, 3))
        i0 = np.array([4])
        pf = build_projector(a[i0])
        q, beta = 0.6, 0.1
        rep = corruption_bound(a, i0, pf, q=q, beta=beta)
        s = subset_min_singular(a, i0, pf, q - beta).value
        z = subset_max_frobenius(a, i0, pf, q - beta)
        mask = np.ones(10, bool)
        mask[4] = False
        smax = np.linalg.svd(a[mask] @ dense_projector(a[i0], 3), compute_uv=False)[0]
        expected = (s**2 - smax**2 * (beta / (1 - q) + 2 * np.sqrt(beta / (1 - q)))) / z
        assert np.isclose(rep.c_qb, expected, rtol=1e-9)

    def test_invalid_hypothesis(self):
        a = np.eye(4)
        pf = build_projector(np.zeros((0, 4)))
        with pytest.raises(InvalidQuantileBeta):
            corruption_bound(a, np.zeros(0, dtype=int), pf, q=0.4, beta=0.5)
        with pytest.raises(InvalidQuantileBeta):
            corruption_bound(a, np.zeros(0, dtype=int), pf, q=0.95, beta=0.1)


class TestLeverageScores:
    def test_identity(self):
        scores = leverage_scores(np.eye(4), 4)
        np.testing.assert_allclose(scores, np.ones(4), atol=1e-12)

    def test_orthonormal_columns(self):
        rng = np.random.default_rng(18)
        q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        scores = leverage_scores(q, 5)
        assert np.isclose(scores.sum(), 5.0, atol=1e-8)

    def test_dense_svd_oracle(self):
        rng = np.random.default_rng(19)
        a = rng.standard_normal((6, 3))
        scores = leverage_scores(a, 2)
        u, _, _ = np.linalg.svd(a, full_matrices=False)
        expected = np.diag(u[:, :2] @ u[:, :2].T)
        assert np.abs(scores - expected).max() <= 1e-10

    def test_sum_and_range(self):
        rng = np.random.default_rng(20)
        for seed in range(10):
            a = np.random.default_rng(seed).standard_normal((8, 5))
            r = int(np.random.default_rng(seed).integers(1, 6))
            scores = leverage_scores(a, r)
            assert np.isclose(scores.sum(), r, atol=1e-8)
            assert np.all(scores >= -1e-12) and np.all(scores <= 1 + 1e-12)

    def test_rank_too_large(self):
        a = np.ones((4, 3))
        with pytest.raises(RankDeficient):
            leverage_scores(a, 2)


class TestSampleGoodSubset:
    def test_single_row(self):
        rng = np.random.default_rng(21)
        got = sample_good_subset(np.ones((1, 3)), 1, 5, "norm", rng)
        assert np.array_equal(got, [0])

    def test_dominant_row_selected(self):
        # one row carries 99% of the squared Frobenius mass
        a = np.vstack([np.full(4, 10.0), np.eye(4)[:3, :]])
        hits = 0
        trials = 10_000
        for seed in range(trials):
            got = sample_good_subset(a, 1, 1, "norm", np.random.default_rng(seed))
            hits += got[0] == 0
        assert hits / trials >= 0.95

    def test_leverage_scheme_runs(self):
        rng = np.random.default_rng(22)
        a = rng.standard_normal((10, 4))
        got = sample_good_subset(a, 2, 6, "leverage", rng)
        assert got.size <= 6 and np.all((0 <= got) & (got < 10))


class TestLowRankCoherentConditioning:
    def test_projected_conditioning_dominates(self):
        # Desk-scale §-style coherent instance: the projected block's inverse
        # scaled condition number must beat the full matrix's by a wide margin.
        from scrk.problems import GeneratorSpec, generate

        p = generate(GeneratorSpec(family="low-rank-coherent", m=500, n=200, seed=0, rank=20, epsilon=0.1))
        rep = scrk_rate_bound(p.a, np.arange(20))
        inv_kappa_proj = rep.sigma_min_plus_proj / rep.frob_proj
        inv_kappa_full = rep.sigma_min_full / rep.frob_full
        assert inv_kappa_proj >= 5.0 * inv_kappa_full
        # projected spectrum is set by the epsilon-scaled complement block
        assert 1e-3 <= inv_kappa_proj <= 1.0
