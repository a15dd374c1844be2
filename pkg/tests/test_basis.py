import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlkan.basis import (
    build_cob,
    bspline_values,
    eval_bspline,
    eval_relu_power,
    make_knots,
    make_uniform_knots,
    relu_power_values,
    uniform_cob_stencil,
    verify_basis_identity,
)


def random_knotvector(seed, n, r, min_gap=0.02):
    rng = np.random.default_rng(seed)
    gaps = min_gap + rng.random(n + 2 * r - 2)
    knots = np.concatenate([[0.0], np.cumsum(gaps)])
    knots -= knots[r - 1]  # put t_0 at 0
    return make_knots_from_full(knots, n, r)


def make_knots_from_full(knots, n, r):
    from mlkan.basis import KnotVector

    return KnotVector(r=r, n=n, knots=knots)


class TestKnots:
    def test_uniform_small(self):
        k = make_uniform_knots(0.0, 1.0, 2, 2)
        assert np.allclose(k.knots, [-0.5, 0.0, 0.5, 1.0, 1.5])
        assert k.h == 0.5
        assert k.dim == 3

    def test_single_interval(self):
        k = make_uniform_knots(0.0, 1.0, 1, 1)
        assert np.allclose(k.knots, [0.0, 1.0])
        assert k.dim == 1

    def test_order4(self):
        k = make_uniform_knots(-1.0, 1.0, 4, 4)
        assert k.knots.size == 11
        assert np.allclose(k.knots, np.arange(-2.5, 2.6, 0.5))

    def test_rejects_bad_domain(self):
        with pytest.raises(ValueError):
            make_uniform_knots(1.0, 0.0, 4, 2)
        with pytest.raises(ValueError):
            make_uniform_knots(0.0, 1.0, 0, 2)

    def test_rejects_degenerate(self):
        from mlkan.basis import KnotVector

        with pytest.raises(ValueError):
            KnotVector(r=1, n=2, knots=np.array([0.0, 0.0, 1.0]))


class TestBsplineEval:
    def test_indicator(self):
        k = make_uniform_knots(0.0, 1.0, 4, 1)
        assert eval_bspline(k, 1, 0.3) == 1.0
        assert eval_bspline(k, 1, 0.6) == 0.0
        assert eval_bspline(k, 3, 1.0) == 1.0  # closed final interval

    def test_hat_peak(self):
        k = make_uniform_knots(0.0, 1.0, 4, 2)
        for i in k.index_range():
            assert eval_bspline(k, i, k.t(i + 1)) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("r", [1, 2, 3, 4])
    def test_partition_of_unity(self, r):
        k = make_uniform_knots(0.0, 1.0, 6, r)
        xs = np.linspace(0.0, 1.0, 100)
        total = bspline_values(k, xs).sum(axis=1)
        assert np.max(np.abs(total - 1.0)) < 1e-12

    def test_support(self):
        k = make_uniform_knots(0.0, 1.0, 8, 3)
        for i in [-2, 0, 3]:
            assert eval_bspline(k, i, k.t(i) - 1e-9) == 0.0
            assert eval_bspline(k, i, k.t(i + 3) + 1e-9) == 0.0

    def test_vectorized_matches_scalar(self):
        k = random_knotvector(11, n=5, r=3)
        xs = np.linspace(k.a, k.b, 57)
        table = bspline_values(k, xs)
        for col, i in enumerate(k.index_range()):
            ref = np.array([eval_bspline(k, i, x) for x in xs])
            assert np.allclose(table[:, col], ref, atol=1e-13)

    def test_index_out_of_range(self):
        k = make_uniform_knots(0.0, 1.0, 4, 2)
        with pytest.raises(IndexError):
            eval_bspline(k, 4, 0.5)


class TestReluPower:
    def test_hinge(self):
        k = make_uniform_knots(0.0, 1.0, 2, 2)
        assert eval_relu_power(k, 1, 1.0) == pytest.approx(0.5)

    def test_zero_left_of_knot(self):
        for r in [1, 2, 3, 4]:
            k = make_uniform_knots(0.0, 1.0, 4, r)
            assert eval_relu_power(k, 0, k.t(0) - 0.25) == 0.0

    def test_cubic(self):
        k = make_uniform_knots(0.0, 1.0, 4, 4)
        assert eval_relu_power(k, 0, 0.3) == pytest.approx(0.027, abs=1e-15)

    def test_vectorized(self):
        k = random_knotvector(3, n=6, r=4)
        xs = np.linspace(k.a, k.b, 33)
        table = relu_power_values(k, xs)
        for col, i in enumerate(k.index_range()):
            ref = np.array([eval_relu_power(k, i, x) for x in xs])
            assert np.allclose(table[:, col], ref, rtol=1e-14, atol=0)

    @given(
        st.floats(-2, 2),
        st.floats(-2, 2),
        st.floats(-3, 3),
        st.integers(1, 5),
    )
    @settings(max_examples=100, deadline=None)
    def test_power_recursion(self, a, b, x, r):
        # (x - a) * relu(x - b)^r == relu(x - b)^(r+1) + (b - a) * relu(x - b)^r
        lhs = (x - a) * max(x - b, 0.0) ** r
        rhs = max(x - b, 0.0) ** (r + 1) + (b - a) * max(x - b, 0.0) ** r
        assert lhs == pytest.approx(rhs, abs=1e-12)


class TestCob:
    def test_order1_stencil(self):
        k = make_uniform_knots(0.0, 1.0, 5, 1)
        a = build_cob(k).densify()
        expected = np.eye(5) - np.diag(np.ones(4), 1)
        assert np.array_equal(a, expected)

    def test_order2_uniform_row(self):
        k = make_uniform_knots(0.0, 1.0, 2, 2)  # h = 0.5
        a = build_cob(k).densify()
        assert np.allclose(a[0, :3], [2.0, -4.0, 2.0])

    def test_order2_nonuniform(self):
        # interior row i on knots (t_i, t_{i+1}, t_{i+2}) = (0, 0.3, 1)
        k = make_knots([0.0, 0.3, 1.0, 1.5, 2.1], r=2)
        a = build_cob(k).densify()
        d0, d1 = 1.0 / 0.3, 1.0 / 0.7
        assert np.allclose(a[1, 1:4], [d0, -(d0 + d1), d1])

    @pytest.mark.parametrize("r", [1, 2, 3, 4])
    def test_uniform_matches_closed_form(self, r):
        k = make_uniform_knots(0.0, 2.0, 8, r)
        a = build_cob(k).densify()
        stencil = uniform_cob_stencil(r, k.h)
        for i in range(k.dim):
            for d in range(r + 1):
                if i + d < k.dim:
                    assert a[i, i + d] == pytest.approx(stencil[d], rel=1e-12)

    def test_scaled(self):
        k = make_uniform_knots(0.0, 1.0, 8, 3)
        a = build_cob(k)
        a_s = build_cob(k, scaled=True)
        assert np.allclose(a_s.densify(), a.densify() * k.h**2, rtol=1e-14)

    def test_scaled_rejects_nonuniform(self):
        k = make_knots([0.0, 0.3, 1.0], r=2)
        with pytest.raises(ValueError):
            build_cob(k, scaled=True)


class TestBasisIdentity:
    def test_order1(self):
        k = make_uniform_knots(0.0, 1.0, 4, 1)
        assert verify_basis_identity(k) < 1e-14

    def test_order3_uniform(self):
        k = make_uniform_knots(0.0, 1.0, 8, 3)
        assert verify_basis_identity(k) < 1e-10

    def test_order4_nonuniform(self):
        k = random_knotvector(19, n=5, r=4)
        assert verify_basis_identity(k) < 1e-9

    @pytest.mark.parametrize("r", [1, 2, 3, 4])
    @pytest.mark.parametrize("n", [2, 5, 17, 32])
    def test_identity_sweep(self, r, n):
        k = make_uniform_knots(-1.0, 1.0, n, r)
        assert verify_basis_identity(k, samples=200) < 1e-9
        k2 = random_knotvector(100 * r + n, n=n, r=r)
        assert verify_basis_identity(k2, samples=200) < 1e-9


class TestSmoothness:
    @pytest.mark.parametrize("r", [3, 4])
    def test_continuity_of_low_derivatives(self, r):
        # C^(r-2): one-sided finite differences of order r-2 agree to O(h)
        k = make_uniform_knots(0.0, 1.0, 8, r)
        eps = 1e-5
        order = r - 2
        for i in list(k.index_range())[1:-1]:
            knot = k.t(i + 1)
            if not (k.a < knot < k.b):
                continue

            def deriv(x0):
                pts = x0 + eps * np.arange(order + 1)
                vals = np.array([eval_bspline(k, i, p) for p in pts])
                for _ in range(order):
                    vals = np.diff(vals) / eps
                return vals[0]

            left = deriv(knot - (order + 1) * eps)
            right = deriv(knot + eps)
            scale = max(1.0, abs(left), abs(right))
            assert abs(left - right) < 0.02 * scale
