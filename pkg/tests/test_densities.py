"""Tests for the closed-form spacing densities and local power curves."""

import math

import numpy as np
import pytest
from scipy import integrate

from nfactors.densities import (
    PowerCurve,
    general_T2_weights,
    goe3_joint_spacing_pdf,
    goe3_spacing_ratio_pdf,
    goe3_total_spacing_pdf,
    local_power_gaussian,
    local_power_nongaussian_T2,
    wigner_surmise_pdf,
)
from nfactors.errors import InvalidInput, InvalidParameter


class TestWignerSurmise:
    def test_known_value(self):
        assert wigner_surmise_pdf(2.0) == pytest.approx(0.5 * math.exp(-0.5), abs=1e-15)

    def test_vanishes_off_support(self):
        assert wigner_surmise_pdf(-1.0) == 0.0
        assert wigner_surmise_pdf(0.0) == 0.0
        np.testing.assert_array_equal(
            wigner_surmise_pdf(np.array([-2.0, -0.5])), np.zeros(2)
        )

    def test_integrates_to_one(self):
        total, _ = integrate.quad(wigner_surmise_pdf, 0.0, np.inf)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_peak_at_two(self):
        assert wigner_surmise_pdf(2.0) > wigner_surmise_pdf(1.8)
        assert wigner_surmise_pdf(2.0) > wigner_surmise_pdf(2.2)

    def test_vectorized(self):
        s = np.linspace(0.0, 8.0, 33)
        out = wigner_surmise_pdf(s)
        assert out.shape == s.shape
        assert np.all(out >= 0.0)


class TestGoe3JointSpacing:
    def test_known_value(self):
        expected = math.exp(-0.5) / (2.0 * math.sqrt(6.0 * math.pi))
        assert goe3_joint_spacing_pdf(1.0, 1.0) == pytest.approx(expected, abs=1e-15)

    def test_symmetric_in_arguments(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            s1, s2 = rng.uniform(0.0, 6.0, size=2)
            assert goe3_joint_spacing_pdf(s1, s2) == pytest.approx(
                goe3_joint_spacing_pdf(s2, s1), rel=1e-14
            )

    def test_vanishes_off_quadrant(self):
        assert goe3_joint_spacing_pdf(-1.0, 1.0) == 0.0
        assert goe3_joint_spacing_pdf(1.0, -1.0) == 0.0
        assert goe3_joint_spacing_pdf(0.0, 2.0) == 0.0

    def test_integrates_to_one(self):
        total, _ = integrate.dblquad(
            goe3_joint_spacing_pdf, 0.0, np.inf, 0.0, np.inf
        )
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_broadcasting(self):
        s1 = np.linspace(0.0, 4.0, 5)[:, None]
        s2 = np.linspace(0.0, 4.0, 7)[None, :]
        out = goe3_joint_spacing_pdf(s1, s2)
        assert out.shape == (5, 7)


class TestGoe3TotalSpacing:
    def test_matches_joint_density_convolution(self):
        for s in (0.5, 1.0, 2.0, 3.5, 5.0, 8.0):
            conv, _ = integrate.quad(
                lambda u, s=s: goe3_joint_spacing_pdf(u, s - u), 0.0, s
            )
            assert goe3_total_spacing_pdf(s) == pytest.approx(conv, abs=1e-6)

    def test_integrates_to_one(self):
        total, _ = integrate.quad(goe3_total_spacing_pdf, 0.0, np.inf)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_vanishes_off_support(self):
        assert goe3_total_spacing_pdf(-0.5) == 0.0
        assert goe3_total_spacing_pdf(0.0) == 0.0


class TestGoe3SpacingRatio:
    def test_known_value(self):
        # (27/8) * 2 / 3^(5/2) simplifies to sqrt(3)/4
        assert goe3_spacing_ratio_pdf(1.0) == pytest.approx(math.sqrt(3.0) / 4.0, abs=1e-15)

    def test_integrates_to_one(self):
        total, _ = integrate.quad(goe3_spacing_ratio_pdf, 0.0, np.inf)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_cubic_tail_constant(self):
        r = 1e6
        assert r ** 3 * goe3_spacing_ratio_pdf(r) == pytest.approx(27.0 / 8.0, rel=1e-5)

    def test_vanishes_off_support(self):
        assert goe3_spacing_ratio_pdf(-0.2) == 0.0
        assert goe3_spacing_ratio_pdf(0.0) == 0.0


class TestLocalPowerGaussian:
    def test_size_matches_level(self):
        curve = local_power_gaussian(2, 0.05, np.array([0.0, 2.0]), 20000, seed=40)
        assert curve.power[0] == pytest.approx(0.05, abs=2.0 / 20000 + 1e-12)

    def test_monotone_within_noise(self):
        R = 50000
        grid = np.array([0.0, 1.0, 2.0, 4.0, 8.0])
        curve = local_power_gaussian(2, 0.05, grid, R, seed=40)
        slack = 2.0 / math.sqrt(R)
        assert np.all(np.diff(curve.power) >= -slack)

    def test_large_shift_rejects(self):
        curve = local_power_gaussian(2, 0.05, np.array([12.0]), 20000, seed=43)
        assert curve.power[0] >= 0.99

    def test_ratio_statistic_path(self):
        grid = np.array([0.0, 3.0, 8.0])
        curve = local_power_gaussian(4, 0.05, grid, 20000, seed=44, statistic="S_star")
        assert curve.statistic == "S_star"
        assert curve.power[0] == pytest.approx(0.05, abs=2.0 / 20000 + 1e-12)
        assert curve.power[2] > curve.power[0]

    def test_seed_reproducibility(self):
        grid = np.array([0.0, 2.0])
        c1 = local_power_gaussian(3, 0.05, grid, 5000, seed=9)
        c2 = local_power_gaussian(3, 0.05, grid, 5000, seed=9)
        np.testing.assert_array_equal(c1.power, c2.power)

    def test_invalid_arguments(self):
        grid = np.array([0.0, 1.0])
        with pytest.raises(InvalidInput):
            local_power_gaussian(1, 0.05, grid, 100, seed=0)
        with pytest.raises(InvalidInput):
            local_power_gaussian(2, 0.05, grid, 100, seed=0, statistic="S_star")
        with pytest.raises(InvalidParameter):
            local_power_gaussian(3, 0.05, grid, 100, seed=0, statistic="bogus")
        with pytest.raises(InvalidParameter):
            local_power_gaussian(3, 1.5, grid, 100, seed=0)
        with pytest.raises(InvalidInput):
            local_power_gaussian(3, 0.05, grid, 0, seed=0)
        with pytest.raises(InvalidInput):
            local_power_gaussian(4, 0.05, grid, 100, seed=0, statistic="S_star",
                                 k_star_minus_k=3)


class TestLocalPowerNongaussianT2:
    def test_size_matches_level(self):
        curve = local_power_nongaussian_T2(3.0, 0.3, 0.05, np.array([0.0, 2.0]), 20000, seed=41)
        assert curve.power[0] == pytest.approx(0.05, abs=2.0 / 20000 + 1e-12)

    def test_gaussian_kurtosis_recovers_gaussian_power(self):
        grid = np.array([0.0, 1.0, 2.0, 4.0, 8.0])
        R = 50000
        gauss = local_power_gaussian(2, 0.05, grid, R, seed=40)
        flat = local_power_nongaussian_T2(2.0, 0.3, 0.05, grid, R, seed=41)
        np.testing.assert_allclose(flat.power, gauss.power, atol=0.02)

    def test_excess_kurtosis_reduces_power(self):
        grid = np.array([2.0, 4.0, 8.0])
        R = 50000
        gauss = local_power_gaussian(2, 0.05, grid, R, seed=40)
        heavy = local_power_nongaussian_T2(5.0, 0.3, 0.05, grid, R, seed=42)
        assert np.all(heavy.power <= gauss.power + 0.02)

    def test_invalid_arguments(self):
        grid = np.array([0.0, 1.0])
        with pytest.raises(InvalidParameter):
            local_power_nongaussian_T2(0.0, 0.3, 0.05, grid, 100, seed=0)
        with pytest.raises(InvalidParameter):
            local_power_nongaussian_T2(2.0, 1.4, 0.05, grid, 100, seed=0)
        with pytest.raises(InvalidParameter):
            local_power_nongaussian_T2(2.0, 0.3, 0.0, grid, 100, seed=0)


class TestGeneralT2Weights:
    def test_identity_basis(self):
        eta_star, a = 3.0, 2.0
        d1, d2, mu1, mu2 = general_T2_weights(np.eye(2), eta_star, a)
        assert d1 == pytest.approx(eta_star / 2.0, abs=1e-14)
        assert d2 == pytest.approx(1.0, abs=1e-14)
        assert mu1 == pytest.approx(a * a / (2.0 * eta_star), abs=1e-14)
        assert mu2 == pytest.approx(0.0, abs=1e-14)

    def test_planar_rotations_follow_overlap_formula(self):
        # for any orthonormal 2x2 basis the component weights depend only
        # on the squared first entry phi
        rng = np.random.default_rng(3)
        eta_star, a = 4.0, 1.5
        for _ in range(20):
            theta = rng.uniform(0.0, 2.0 * math.pi)
            Q = np.array([
                [math.cos(theta), -math.sin(theta)],
                [math.sin(theta), math.cos(theta)],
            ])
            if rng.uniform() < 0.5:
                Q[:, 1] = -Q[:, 1]
            phi = Q[0, 0] ** 2
            d1, d2, mu1, mu2 = general_T2_weights(Q, eta_star, a)
            assert d1 == pytest.approx(eta_star / 2.0, abs=1e-12)
            assert d2 == pytest.approx(1.0, abs=1e-12)
            assert mu1 == pytest.approx(
                (a * a / (2.0 * eta_star)) * (1.0 - 2.0 * phi) ** 2, abs=1e-10
            )
            assert mu2 == pytest.approx(a * a * phi * (1.0 - phi), abs=1e-10)

    def test_gaussian_kurtosis_gives_flat_weights(self):
        rng = np.random.default_rng(5)
        for T in (2, 3, 6):
            Q = np.linalg.qr(rng.standard_normal((T, 2)))[0]
            a = 3.0
            d1, d2, mu1, mu2 = general_T2_weights(Q, 2.0, a)
            assert d1 == pytest.approx(1.0, abs=1e-14)
            assert d2 == pytest.approx(1.0, abs=1e-14)
            assert mu1 + mu2 == pytest.approx(a * a / 4.0, abs=1e-10)

    def test_long_panel_overlap_is_small(self):
        # with many periods the residual directions spread out, so the
        # kurtosis correction to the leading weight becomes negligible
        for s in range(20):
            rng = np.random.default_rng(200 + s)
            Q = np.linalg.qr(rng.standard_normal((100, 2)))[0]
            d1, _, _, _ = general_T2_weights(Q, 3.0, 1.0)
            assert d1 - 1.0 < 0.05

    def test_invalid_arguments(self):
        with pytest.raises(InvalidInput):
            general_T2_weights(np.ones((4, 2)), 2.0, 1.0)
        with pytest.raises(InvalidInput):
            general_T2_weights(np.eye(3), 2.0, 1.0)
        with pytest.raises(InvalidParameter):
            general_T2_weights(np.eye(2), -1.0, 1.0)


class TestPowerCurve:
    def test_shape_mismatch(self):
        with pytest.raises(InvalidInput):
            PowerCurve(grid=np.arange(3.0), power=np.zeros(2), T_minus_k=2,
                       alpha=0.05, R=100)

    def test_power_out_of_range(self):
        with pytest.raises(InvalidInput):
            PowerCurve(grid=np.arange(2.0), power=np.array([0.0, 1.2]),
                       T_minus_k=2, alpha=0.05, R=100)

    def test_bad_level(self):
        with pytest.raises(InvalidParameter):
            PowerCurve(grid=np.arange(2.0), power=np.zeros(2), T_minus_k=2,
                       alpha=0.0, R=100)

    def test_bad_dimension(self):
        with pytest.raises(InvalidInput):
            PowerCurve(grid=np.arange(2.0), power=np.zeros(2), T_minus_k=1,
                       alpha=0.05, R=100)
