import math

import numpy as np
import pytest

from mlkan.analysis import (
    eigen_report,
    fd_stencil_check,
    ntk_bound_check,
    ratio_scaling,
    residual_spectrum,
    sign_changes,
    singular_bound_check,
    spearman,
)
from mlkan.basis import build_cob, make_uniform_knots
from mlkan.linalg import matmul
from mlkan.model import init_weights, make_kan_network


class TestSignChanges:
    def test_basic(self):
        assert sign_changes(np.array([1.0, -1.0, 1.0])) == 2
        assert sign_changes(np.array([1.0, 2.0, 3.0])) == 0

    def test_numerical_zeros_skipped(self):
        v = np.array([1.0, 1e-16, -1.0])
        assert sign_changes(v) == 1


class TestSpearman:
    def test_perfect(self):
        assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)

    def test_reversed(self):
        assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_ties(self):
        rho = spearman([1, 2, 2, 3], [1, 2, 3, 4])
        assert 0.9 < rho <= 1.0


class TestEigenReport:
    def test_order1_extremes(self):
        for n in (8, 50):
            rep = eigen_report(1, n)
            assert rep.sign_changes[0] == 0
            assert rep.sign_changes[-1] == rep.eigenvalues.size - 1

    def test_order1_gram_is_second_difference(self):
        k = make_uniform_knots(0.0, 1.0, 8, 1)
        a = build_cob(k).densify()
        gram = matmul(a.T, a)
        for i in range(2, 6):
            assert np.allclose(gram[i, i - 1 : i + 2], [-1.0, 2.0, -1.0])

    def test_ratio_monotone_in_n(self):
        r1 = eigen_report(2, 8).ratio
        r2 = eigen_report(2, 16).ratio
        assert 1.0 <= r1 < r2

    def test_ratio_exceeds_100_at_n10(self):
        assert eigen_report(1, 10).ratio > 100.0

    def test_ratio_against_direct_eigensolve(self):
        # for a small well-conditioned case the solve-based ratio matches
        rep = eigen_report(2, 8)
        direct = rep.eigenvalues[-1] / rep.eigenvalues[0]
        assert rep.ratio == pytest.approx(direct, rel=1e-6)

    @pytest.mark.parametrize("r", [1, 2, 3, 4])
    def test_sign_change_monotonicity(self, r):
        rep = eigen_report(r, 40)
        rho = spearman(np.arange(rep.sign_changes.size), rep.sign_changes)
        assert rho >= 0.99


class TestRatioScaling:
    def test_order1_slope(self):
        slope = ratio_scaling(1, [16, 32, 64, 128])
        assert 1.7 <= slope <= 2.3

    def test_order2_slope(self):
        slope = ratio_scaling(2, [16, 32, 64, 128])
        assert 3.6 <= slope <= 4.4

    def test_validation(self):
        with pytest.raises(ValueError):
            ratio_scaling(1, [16, 8, 32, 64])
        with pytest.raises(ValueError):
            ratio_scaling(1, [16, 32])


class TestFdStencil:
    def test_order1_exact(self):
        assert fd_stencil_check(1, 8, h=1.0) < 1e-15

    def test_order2_binomials(self):
        k = make_uniform_knots(0.0, 4.0, 4, 2)  # h = 1
        dense = build_cob(k).densify()
        assert np.allclose(dense[0, :3], [1.0, -2.0, 1.0])
        assert fd_stencil_check(2, 8, h=1.0) < 1e-12

    @pytest.mark.parametrize("r", [1, 2, 3, 4])
    @pytest.mark.parametrize("h", [1.0, 0.5, 0.1])
    def test_sweep(self, r, h):
        assert fd_stencil_check(r, 8, h=h) < 1e-12

    def test_quartic_quarter_spacing(self):
        assert fd_stencil_check(4, 8, h=0.25) < 1e-12


class TestSingularBound:
    def test_bound_values(self):
        assert singular_bound_check(2, 16)[1] == pytest.approx(4.0)
        assert singular_bound_check(4, 16)[1] == pytest.approx(16.0 / 6.0)

    def test_order1_sigma(self):
        sigma, bound = singular_bound_check(1, 32)
        assert bound == pytest.approx(2.0)
        assert sigma <= bound + 1e-9

    @pytest.mark.parametrize("r", [1, 2, 3, 4, 5])
    def test_bound_holds(self, r):
        prev = 0.0
        for n in (8, 16, 32):
            sigma, bound = singular_bound_check(r, n)
            assert sigma <= bound + 1e-9
            assert sigma >= prev - 1e-12  # nondecreasing in n
            prev = sigma


class TestNtkBound:
    def test_random_nets(self):
        for seed in range(3):
            net = make_kan_network([2, 5, 1], 8, 3)
            init_weights(net, 60 + seed, scale=0.3)
            x = np.random.default_rng(70 + seed).random((32, 2))
            rho_s, rho_r, ratio = ntk_bound_check(net, x)
            assert rho_s <= 4.0 * rho_r + 1e-6
            assert ratio == pytest.approx(rho_s / rho_r)

    def test_near_identity_order1(self):
        # r=1 scaled blocks are the bidiagonal (1,-1): ratio stays within bound
        net = make_kan_network([1, 1], 4, 1)
        init_weights(net, 80, scale=0.5)
        x = np.random.default_rng(81).random((8, 1))
        rho_s, rho_r, ratio = ntk_bound_check(net, x)
        assert ratio <= 4.0 + 1e-9

    def test_rank_deficient_net(self):
        # single knot interval: duplicated collocation points collapse rank
        net = make_kan_network([1, 1], 1, 2)
        init_weights(net, 82, scale=0.5)
        x = np.full((6, 1), 0.5)
        rho_s, rho_r, ratio = ntk_bound_check(net, x)
        assert rho_r > 0 and np.isfinite(ratio)


class TestResidualSpectrum:
    def test_energy_is_parseval_consistent(self):
        rng = np.random.default_rng(90)
        field = rng.standard_normal((16, 16))
        rep = residual_spectrum(field)
        assert rep.total_energy == pytest.approx(np.sum(field**2), rel=1e-8)

    def test_cross_sections(self):
        n = 8
        x = np.arange(n)
        field = np.cos(2 * math.pi * 2 * x / n)[None, :] * np.ones((n, 1))
        rep = residual_spectrum(field)
        assert rep.cross_axis1[n // 2 - 2] == pytest.approx(n * n / 2, rel=1e-9)
        assert rep.cross_axis1[n // 2 + 2] == pytest.approx(n * n / 2, rel=1e-9)
        assert rep.magnitudes.shape == (n, n)
