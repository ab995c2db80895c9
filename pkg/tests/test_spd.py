"""SPD toolbox: covariances, matrix functions, geometry, Karcher mean, vect."""

import numpy as np
import pytest

from mibci import spd
from mibci.errors import NumericError
from tests.oracles import (
    geodesic_point,
    make_spd,
    make_sym,
    naive_cov,
    naive_inner,
    sqrtm_schur,
)


class TestCovariances:
    def test_matches_naive_summation(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = rng.normal(size=(6, 120))
            C = spd.covariance(x)
            ref = naive_cov(x)
            assert np.allclose(C, ref, rtol=1e-12, atol=1e-12)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(4, 5, 80))
        batch = spd.covariances(X)
        for t in range(4):
            assert np.array_equal(batch[t], spd.covariance(X[t]))

    def test_rank_deficient_input_gets_ridge(self):
        rng = np.random.default_rng(2)
        v = rng.normal(size=(6, 1))
        x = v @ rng.normal(size=(1, 50))  # rank one
        C = spd.covariance(x)
        assert spd.is_spd(C)
        w = np.linalg.eigvalsh(C)
        assert w[0] > 0.5 * spd.RIDGE_EPS * np.trace(C) / 6

    def test_zero_input_stays_spd(self):
        C = spd.covariance(np.zeros((4, 30)))
        assert spd.is_spd(C)

    def test_too_few_samples(self):
        with pytest.raises(ValueError, match="at least 2 samples"):
            spd.covariance(np.zeros((3, 1)))

    def test_non_finite_rejected(self):
        x = np.zeros((3, 10))
        x[1, 2] = np.inf
        with pytest.raises(ValueError, match="non-finite"):
            spd.covariance(x)


class TestMatrixFunctions:
    def test_log_exp_roundtrip(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            C = make_spd(rng, 6, spread=1.5)
            back = spd.expm(spd.logm(C))
            assert np.linalg.norm(back - C) < 1e-11 * np.linalg.norm(C)

    def test_exp_log_roundtrip(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            S = make_sym(rng, 5)
            back = spd.logm(spd.expm(S))
            assert np.linalg.norm(back - S) < 1e-11 * max(1.0, np.linalg.norm(S))

    def test_sqrtm_against_schur_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            C = make_spd(rng, 7)
            assert np.allclose(spd.sqrtm(C), sqrtm_schur(C), rtol=1e-10, atol=1e-12)

    def test_sqrtm_squares_back(self):
        rng = np.random.default_rng(6)
        C = make_spd(rng, 8)
        R = spd.sqrtm(C)
        assert np.allclose(R @ R, C, rtol=1e-11, atol=1e-13)

    def test_invsqrtm_inverts(self):
        rng = np.random.default_rng(7)
        C = make_spd(rng, 8)
        R = spd.invsqrtm(C)
        assert np.allclose(R @ C @ R, np.eye(8), atol=1e-11)

    def test_batched_inputs(self):
        rng = np.random.default_rng(8)
        Cs = np.stack([make_spd(rng, 4) for _ in range(6)]).reshape(2, 3, 4, 4)
        batch = spd.logm(Cs)
        assert batch.shape == Cs.shape
        for i in range(2):
            for j in range(3):
                assert np.allclose(batch[i, j], spd.logm(Cs[i, j]), atol=1e-13)

    def test_logm_requires_positive_definite(self):
        with pytest.raises(NumericError, match="not positive definite"):
            spd.logm(np.diag([1.0, -1.0]))

    def test_asymmetric_input_rejected(self):
        M = np.asarray([[1.0, 1.0], [0.0, 1.0]])
        with pytest.raises(ValueError, match="asymmetric"):
            spd.expm(M)


class TestTangentMaps:
    def test_log_exp_map_roundtrip(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            Cref = make_spd(rng, 5)
            C = make_spd(rng, 5)
            S = spd.log_map(C, Cref)
            back = spd.exp_map(S, Cref)
            assert np.linalg.norm(back - C) < 1e-10 * np.linalg.norm(C)

    def test_log_map_at_identity_is_logm(self):
        rng = np.random.default_rng(10)
        C = make_spd(rng, 6)
        assert np.allclose(spd.log_map(C, np.eye(6)), spd.logm(C), atol=1e-12)

    def test_log_map_vanishes_at_reference(self):
        rng = np.random.default_rng(11)
        C = make_spd(rng, 6)
        assert np.linalg.norm(spd.log_map(C, C)) < 1e-12 * np.linalg.norm(C)

    def test_inner_tangent_against_inverse_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            Cref = make_spd(rng, 5)
            S1 = make_sym(rng, 5)
            S2 = make_sym(rng, 5)
            got = spd.inner_tangent(S1, S2, Cref)
            ref = naive_inner(S1, S2, Cref)
            assert got == pytest.approx(ref, rel=1e-9, abs=1e-12)

    def test_inner_tangent_norm_positive(self):
        rng = np.random.default_rng(13)
        Cref = make_spd(rng, 5)
        S = make_sym(rng, 5)
        assert spd.inner_tangent(S, S, Cref) > 0.0


class TestGenEigh:
    def test_solves_the_pencil(self):
        rng = np.random.default_rng(14)
        for _ in range(10):
            C1 = make_spd(rng, 6)
            C2 = make_spd(rng, 6)
            lam, U = spd.gen_eigh(C1, C2)
            assert np.all(np.diff(lam) >= 0.0)
            resid = np.linalg.norm(C1 @ U - C2 @ U * lam[None, :])
            assert resid < 1e-9 * np.linalg.norm(C1)

    def test_b_orthonormal_eigenvectors(self):
        rng = np.random.default_rng(15)
        C1 = make_spd(rng, 6)
        C2 = make_spd(rng, 6)
        _, U = spd.gen_eigh(C1, C2)
        assert np.allclose(U.T @ C2 @ U, np.eye(6), atol=1e-10)

    def test_indefinite_c2_rejected(self):
        with pytest.raises(NumericError, match="C2 is not positive definite"):
            spd.gen_eigh(np.eye(3), np.diag([1.0, -1.0, 1.0]))


class TestRiemannDistance:
    def test_known_value(self):
        A = np.eye(3)
        B = np.diag([np.exp(2.0), 1.0, 1.0])
        assert spd.dist_riemann(A, B) == pytest.approx(2.0, rel=1e-12)

    def test_symmetry_and_identity(self):
        rng = np.random.default_rng(16)
        A = make_spd(rng, 5)
        B = make_spd(rng, 5)
        assert spd.dist_riemann(A, A) == pytest.approx(0.0, abs=1e-7)
        assert spd.dist_riemann(A, B) == pytest.approx(spd.dist_riemann(B, A),
                                                       rel=1e-9)

    def test_congruence_invariance(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            A = make_spd(rng, 5)
            B = make_spd(rng, 5)
            W = rng.normal(size=(5, 5))
            d0 = spd.dist_riemann(A, B)
            d1 = spd.dist_riemann(W @ A @ W.T, W @ B @ W.T)
            assert d1 == pytest.approx(d0, rel=1e-8)

    def test_scaling_distance(self):
        rng = np.random.default_rng(18)
        A = make_spd(rng, 4)
        s = 3.7
        expected = np.sqrt(4) * np.log(s)
        assert spd.dist_riemann(A, s * A) == pytest.approx(expected, rel=1e-9)

    def test_triangle_inequality_sampled(self):
        rng = np.random.default_rng(19)
        for _ in range(10):
            A, B, C = (make_spd(rng, 4) for _ in range(3))
            ab = spd.dist_riemann(A, B)
            bc = spd.dist_riemann(B, C)
            ac = spd.dist_riemann(A, C)
            assert ac <= ab + bc + 1e-9


class TestMeans:
    def test_arithmetic_mean(self):
        rng = np.random.default_rng(20)
        Cs = np.stack([make_spd(rng, 4) for _ in range(7)])
        assert np.allclose(spd.arithmetic_mean(Cs), Cs.mean(axis=0))

    def test_arithmetic_mean_empty(self):
        with pytest.raises(ValueError, match="non-empty"):
            spd.arithmetic_mean(np.zeros((0, 3, 3)))

    def test_two_point_mean_is_geodesic_midpoint(self):
        rng = np.random.default_rng(21)
        for _ in range(8):
            A = make_spd(rng, 5)
            B = make_spd(rng, 5)
            G = spd.geometric_mean(np.stack([A, B]))
            mid = geodesic_point(A, B, 0.5)
            assert np.linalg.norm(G - mid) < 1e-7 * np.linalg.norm(mid)

    def test_first_order_condition(self):
        rng = np.random.default_rng(22)
        Cs = np.stack([make_spd(rng, 5, spread=1.0) for _ in range(15)])
        G = spd.geometric_mean(Cs, tol=1e-10)
        R = spd.invsqrtm(G)
        T = spd.logm(R[None] @ Cs @ R[None]).mean(axis=0)
        assert np.linalg.norm(spd.sqrtm(G) @ T @ spd.sqrtm(G)) < 1e-9

    def test_congruence_equivariance(self):
        rng = np.random.default_rng(23)
        Cs = np.stack([make_spd(rng, 4) for _ in range(6)])
        W = rng.normal(size=(4, 4))
        G1 = spd.geometric_mean(np.einsum("ij,tjk,lk->til", W, Cs, W), tol=1e-12)
        G0 = spd.geometric_mean(Cs, tol=1e-12)
        assert np.linalg.norm(G1 - W @ G0 @ W.T) < 1e-7 * np.linalg.norm(G1)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(24)
        Cs = np.stack([make_spd(rng, 4) for _ in range(9)])
        G0 = spd.geometric_mean(Cs, tol=1e-12)
        G1 = spd.geometric_mean(Cs[rng.permutation(9)], tol=1e-12)
        assert np.linalg.norm(G0 - G1) < 1e-9 * np.linalg.norm(G0)

    def test_identity_pool(self):
        Cs = np.stack([np.eye(4)] * 5)
        assert np.allclose(spd.geometric_mean(Cs), np.eye(4), atol=1e-12)

    def test_single_matrix(self):
        rng = np.random.default_rng(25)
        C = make_spd(rng, 4)
        assert np.array_equal(spd.geometric_mean(C[None]), C)

    def test_commuting_pool_closed_form(self):
        # diagonal matrices commute; the Karcher mean is the entrywise
        # geometric mean of the diagonals
        rng = np.random.default_rng(26)
        D = rng.uniform(0.2, 5.0, size=(6, 4))
        Cs = np.stack([np.diag(d) for d in D])
        G = spd.geometric_mean(Cs, tol=1e-12)
        expected = np.diag(np.exp(np.log(D).mean(axis=0)))
        assert np.allclose(G, expected, rtol=1e-9, atol=1e-12)

    def test_wide_spread_pool_converges(self):
        # eigenvalue ratios of a few hundred between pool members
        rng = np.random.default_rng(27)
        Cs = np.stack([make_spd(rng, 6, spread=2.5) for _ in range(40)])
        G = spd.geometric_mean(Cs)
        R = spd.invsqrtm(G)
        T = spd.logm(R[None] @ Cs @ R[None]).mean(axis=0)
        assert np.linalg.norm(spd.sqrtm(G) @ T @ spd.sqrtm(G)) < 1e-8

    def test_non_convergence_raises_with_residual(self):
        rng = np.random.default_rng(28)
        Cs = np.stack([make_spd(rng, 4) for _ in range(5)])
        with pytest.raises(NumericError, match="did not converge") as err:
            spd.geometric_mean(Cs, tol=1e-8, max_iter=0)
        assert err.value.residual is not None
        assert err.value.residual > 0.0

    def test_empty_pool(self):
        with pytest.raises(ValueError, match="non-empty"):
            spd.geometric_mean(np.zeros((0, 3, 3)))


class TestVect:
    def test_hand_built_two_by_two(self):
        S = np.asarray([[1.5, -0.25], [-0.25, 4.0]])
        v = spd.vect(S)
        assert np.allclose(v, [1.5, -0.25 * np.sqrt(2.0), 4.0])

    def test_norm_preservation(self):
        rng = np.random.default_rng(29)
        for _ in range(50):
            S = make_sym(rng, 8)
            assert np.linalg.norm(spd.vect(S)) == pytest.approx(
                np.linalg.norm(S), rel=1e-12)

    def test_unvect_inverts(self):
        rng = np.random.default_rng(30)
        for _ in range(20):
            S = make_sym(rng, 7)
            assert np.allclose(spd.unvect(spd.vect(S)), S, atol=1e-12)

    def test_length(self):
        assert spd.vect(np.eye(22)).shape == (253,)

    def test_dot_products_match_frobenius(self):
        rng = np.random.default_rng(31)
        S1 = make_sym(rng, 6)
        S2 = make_sym(rng, 6)
        assert float(spd.vect(S1) @ spd.vect(S2)) == pytest.approx(
            float(np.sum(S1 * S2)), rel=1e-10)

    def test_batched(self):
        rng = np.random.default_rng(32)
        S = np.stack([make_sym(rng, 5) for _ in range(4)])
        V = spd.vect(S)
        assert V.shape == (4, 15)
        for i in range(4):
            assert np.array_equal(V[i], spd.vect(S[i]))

    def test_unvect_bad_length(self):
        with pytest.raises(ValueError, match="triangular number"):
            spd.unvect(np.zeros(7))
