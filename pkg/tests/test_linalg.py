import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matpivot import linalg as la
from matpivot._dispatch import BACKEND, svd_values

from .oracles import (oracle_proj_dist, oracle_sigma, oracle_svdvals,
                      oracle_wedge_pairwise)


def rand_mat(rng, d):
    return rng.standard_normal((d, d))


class TestOpNorm:
    def test_identity(self):
        assert la.op_norm(np.eye(2)) == pytest.approx(1.0)

    def test_diag(self):
        assert la.op_norm(np.diag([2.0, 1.0])) == pytest.approx(2.0)

    def test_matches_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            g = rand_mat(rng, 3)
            assert la.op_norm(g) == pytest.approx(oracle_svdvals(g)[0],
                                                  abs=1e-10)

    def test_zero(self):
        assert la.op_norm(np.zeros((2, 2))) == 0.0

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            la.op_norm(np.array([[1.0, np.nan], [0.0, 1.0]]))

    def test_rejects_bad_dim(self):
        with pytest.raises(ValueError):
            la.op_norm(np.eye(9))


class TestWedge:
    def test_identity_d2(self):
        assert la.wedge_square(np.eye(2)).tolist() == [[1.0]]

    def test_diagonal_d3(self):
        w = la.wedge_square(np.diag([1.0, 2.0, 3.0]))
        assert np.allclose(np.diag(w), [2.0, 3.0, 6.0])
        assert np.allclose(w, np.diag(np.diag(w)))

    def test_multiplicative(self):
        rng = np.random.default_rng(1)
        a, b = rand_mat(rng, 4), rand_mat(rng, 4)
        np.testing.assert_allclose(la.wedge_square(a @ b),
                                   la.wedge_square(a) @ la.wedge_square(b),
                                   atol=1e-10)

    def test_singular_values_are_pairwise_products(self):
        rng = np.random.default_rng(2)
        for d in (2, 3, 4):
            g = rand_mat(rng, d)
            got = svd_values(la.wedge_square(g))
            want = oracle_wedge_pairwise(g)
            np.testing.assert_allclose(got, want, atol=1e-9)


class TestSigma:
    def test_identity(self):
        assert la.sigma(np.eye(3)) == pytest.approx(1.0)

    def test_rank_one(self):
        assert la.sigma(np.array([[1.0, 0.0], [0.0, 0.0]])) == 0.0

    def test_diag(self):
        assert la.sigma(np.diag([2.0, 1.0])) == pytest.approx(0.5)

    def test_zero_matrix_rejected(self):
        with pytest.raises(la.DomainError):
            la.sigma(np.zeros((2, 2)))

    def test_matches_oracle_and_wedge(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            g = rand_mat(rng, 4)
            s = la.sigma(g)
            assert s == pytest.approx(oracle_sigma(g), abs=1e-10)
            via_wedge = la.op_norm(la.wedge_square(g)) / la.op_norm(g) ** 2
            assert s == pytest.approx(via_wedge, abs=1e-9)

    def test_transpose_invariant(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            g = rand_mat(rng, 3)
            assert la.sigma(g) == pytest.approx(la.sigma(g.T), abs=1e-12)


class TestProjDist:
    def test_orthogonal(self):
        assert la.proj_dist([1, 0], [0, 1]) == pytest.approx(1.0)

    def test_same(self):
        assert la.proj_dist([1, 2, 3], [2, 4, 6]) == pytest.approx(0.0,
                                                                   abs=1e-12)

    def test_known_value(self):
        assert la.proj_dist([1, 1], [1, 0]) == pytest.approx(
            0.7071067811865475, abs=1e-12)

    def test_least_squares_form(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            x, y = rng.standard_normal(4), rng.standard_normal(4)
            assert la.proj_dist(x, y) == pytest.approx(
                oracle_proj_dist(x, y), abs=1e-10)

    def test_metric_properties(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            x, y, z = (rng.standard_normal(3) for _ in range(3))
            dxy = la.proj_dist(x, y)
            assert dxy == pytest.approx(la.proj_dist(y, x), abs=1e-15)
            assert dxy <= la.proj_dist(x, z) + la.proj_dist(z, y) + 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            la.proj_dist([1, 0], [1, 0, 0])


class TestAligned:
    def test_projector_self(self):
        p = np.diag([1.0, 0.0])
        assert la.is_aligned(p, p, 1.0)

    def test_orthogonal_projectors(self):
        e11 = np.diag([1.0, 0.0])
        e22 = np.diag([0.0, 1.0])
        assert not la.is_aligned(e11, e22, 1e-9)

    def test_zero_factor_rejected(self):
        with pytest.raises(la.DomainError):
            la.is_aligned(np.zeros((2, 2)), np.eye(2), 0.5)

    def test_covector_vector(self):
        assert la.is_aligned(np.array([1.0, 0.0]), np.array([1.0, 0.0]), 1.0)
        assert not la.is_aligned(np.array([1.0, 0.0]),
                                 np.array([0.0, 1.0]), 0.1)

    def test_agrees_with_oracle_ratio(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            g, h = rand_mat(rng, 3), rand_mat(rng, 3)
            ratio = oracle_svdvals(g @ h)[0] / (
                oracle_svdvals(g)[0] * oracle_svdvals(h)[0])
            eps = rng.uniform(0.05, 1.0)
            if abs(ratio - eps) > 1e-6:
                assert la.is_aligned(g, h, eps) == (ratio >= eps)

    @given(st.floats(min_value=0.01, max_value=0.99),
           st.floats(min_value=0.01, max_value=0.99),
           st.integers(min_value=0, max_value=10**6))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_eps(self, e1, e2, seed):
        rng = np.random.default_rng(seed)
        g, h = rand_mat(rng, 2), rand_mat(rng, 2)
        lo, hi = min(e1, e2), max(e1, e2)
        if la.is_aligned(g, h, hi):
            assert la.is_aligned(g, h, lo)


class TestSubmultiplicativity:
    def test_norm_and_wedge_products(self):
        rng = np.random.default_rng(20)
        for _ in range(100):
            g, h = rand_mat(rng, 3), rand_mat(rng, 3)
            assert la.op_norm(g @ h) <= la.op_norm(g) * la.op_norm(h) + 1e-9
            wg, wh = la.wedge_square(g), la.wedge_square(h)
            assert la.op_norm(wg @ wh) <= \
                la.op_norm(wg) * la.op_norm(wh) + 1e-9


class TestSingularData:
    def test_directions_and_values(self):
        rng = np.random.default_rng(21)
        g = rand_mat(rng, 3)
        sd = la.singular_data(g)
        assert np.all(np.diff(sd.values) <= 1e-15)
        assert sd.values[0] == pytest.approx(la.op_norm(g), abs=1e-12)
        # left direction carries the image of the right direction
        img = g @ sd.right.coords
        assert la.proj_dist(img, sd.left.coords) < 1e-9


class TestNormCocycleLipschitz:
    def test_random_triples(self):
        rng = np.random.default_rng(8)
        f = rng.standard_normal((2000, 3, 3))
        x = rng.standard_normal((2000, 3))
        y = rng.standard_normal((2000, 3))
        s1 = np.linalg.svd(f, compute_uv=False)[:, 0]
        fx = np.linalg.norm(np.einsum("nij,nj->ni", f, x), axis=1)
        fy = np.linalg.norm(np.einsum("nij,nj->ni", f, y), axis=1)
        lhs = np.abs(fx / (s1 * np.linalg.norm(x, axis=1))
                     - fy / (s1 * np.linalg.norm(y, axis=1)))
        rhs = la.proj_dist_batch(x, y)
        assert np.all(lhs <= rhs + 1e-9)


class TestCones:
    def test_v_cone_top_direction(self):
        assert la.cone_test(np.diag([2.0, 1.0]), [1, 0], 1.0, "V")

    def test_v_cone_bottom_direction(self):
        assert not la.cone_test(np.diag([2.0, 1.0]), [0, 1], 0.6, "V")

    def test_u_cone_image_of_top(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            g = rand_mat(rng, 3)
            _, _, vt = np.linalg.svd(g)
            v = g @ vt[0]
            assert la.cone_test(g, v, 1.0 - 1e-9, "U")

    def test_u_cone_outside_image(self):
        g = np.array([[1.0, 0.0], [0.0, 0.0]])
        assert not la.cone_test(g, [0.0, 1.0], 0.5, "U")

    def test_w_is_u_of_transpose(self):
        rng = np.random.default_rng(10)
        g = rand_mat(rng, 3)
        v = rng.standard_normal(3)
        assert la.cone_test(g, v, 0.3, "W") == la.cone_test(g.T, v, 0.3, "U")

    def test_zero_vector_rejected(self):
        with pytest.raises(la.DomainError):
            la.cone_test(np.eye(2), [0.0, 0.0], 0.5, "V")


class TestSpectral:
    def test_diagonal(self):
        sp = la.spectral(np.diag([3.0, 1.0]))
        assert sp.rho1 == pytest.approx(3.0, rel=1e-10)
        assert sp.rho2 == pytest.approx(1.0, rel=1e-8)
        assert sp.converged
        assert np.allclose(sp.top_eigen.coords, [1.0, 0.0], atol=1e-8)

    def test_rotation_non_proximal(self):
        rot = np.array([[0.0, -1.0], [1.0, 0.0]])
        sp = la.spectral(rot, max_iter=20000)
        assert sp.rho1 == pytest.approx(1.0, rel=1e-8)
        assert sp.rho2 == pytest.approx(1.0, rel=1e-8)
        assert not sp.converged
        assert sp.top_eigen is None

    def test_closed_form(self):
        g = np.array([[2.0, 1.0], [1.0, 1.0]])
        sp = la.spectral(g)
        assert sp.rho1 == pytest.approx((3 + np.sqrt(5)) / 2, rel=1e-9)

    def test_diagonalizable_matches_moduli(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            evals = np.sort(rng.uniform(0.5, 3.0, 3))[::-1]
            evals[0] += 0.5   # clear gap
            q = np.linalg.qr(rng.standard_normal((3, 3)))[0]
            g = q @ np.diag(evals) @ q.T
            sp = la.spectral(g)
            assert sp.converged
            assert sp.rho1 == pytest.approx(evals[0], rel=1e-7)
            assert sp.rho2 == pytest.approx(evals[1], rel=1e-5)

    def test_invariants(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            sp = la.spectral(rand_mat(rng, 3), max_iter=5000)
            assert sp.rho2 <= sp.rho1 + 1e-12
            assert (sp.top_eigen is not None) == \
                (sp.converged and sp.rho1 > sp.rho2)


class TestProjPoint:
    def test_canonical_sign(self):
        p = la.proj_point([-1.0, 2.0])
        assert p.coords[0] > 0

    def test_unit_norm(self):
        p = la.proj_point([3.0, 4.0])
        assert np.linalg.norm(p.coords) == pytest.approx(1.0, abs=1e-12)

    def test_unique_representative(self):
        assert la.proj_point([1.0, -2.0]) == la.proj_point([-2.0, 4.0])

    def test_zero_rejected(self):
        with pytest.raises(la.DomainError):
            la.proj_point([0.0, 0.0])


def test_backend_is_reported():
    assert BACKEND in ("numba", "numpy")
