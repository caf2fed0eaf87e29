"""Unit tests for the eigenvalue perturbation expansions."""

import math
import warnings

import numpy as np
import pytest

from nfactors.errors import ExpansionRegimeWarning, InvalidInput
from nfactors.linalg import sym_eig
from nfactors.perturbation import (
    LowRankSym,
    expansion_regime_bound,
    inverse_spectrum_norm,
    large_eig_eigvec_first_order,
    small_eig_first_order,
    small_eig_second_order,
)


def random_instance(rng, K, k, scale=1.0):
    """A random rank-k symmetric matrix with well separated eigenvalues."""
    d = scale * (np.arange(k, 0, -1) + rng.uniform(0.2, 0.8, size=k))
    U = np.linalg.qr(rng.standard_normal((K, k)))[0]
    return LowRankSym(d=d, U=U)


def random_psi(rng, K, norm):
    A = rng.standard_normal((K, K))
    Psi = (A + A.T) / 2.0
    return Psi * (norm / np.linalg.norm(Psi, "fro"))


class TestLowRankSym:
    def test_matrix_roundtrip(self):
        rng = np.random.default_rng(0)
        A = random_instance(rng, 5, 2)
        back = LowRankSym.from_matrix(A.matrix(), rank=2)
        np.testing.assert_allclose(np.sort(back.d), np.sort(A.d), atol=1e-10)

    def test_from_matrix_rejects_wrong_rank(self):
        with pytest.raises(InvalidInput):
            LowRankSym.from_matrix(np.diag([3.0, 2.0, 1.0]), rank=1)

    def test_rejects_tied_eigenvalues(self):
        with pytest.raises(InvalidInput):
            LowRankSym(d=[1.0, 1.0], U=np.eye(3)[:, :2])

    def test_rejects_zero_eigenvalue(self):
        with pytest.raises(InvalidInput):
            LowRankSym(d=[1.0, 0.0], U=np.eye(3)[:, :2])

    def test_regime_bound_formula(self):
        A = LowRankSym(d=[2.0], U=np.eye(2)[:, :1])
        assert inverse_spectrum_norm(A) == pytest.approx(0.5)
        assert expansion_regime_bound(A) == pytest.approx(
            1.0 / (3.0 * 0.5 * 3.0 ** 1.5)
        )


class TestSmallEigSecondOrder:
    def test_zero_perturbation(self):
        rng = np.random.default_rng(1)
        A = random_instance(rng, 6, 2)
        np.testing.assert_allclose(
            small_eig_second_order(A, np.zeros((6, 6))), np.zeros(4)
        )

    def test_two_by_two_closed_form(self):
        A = LowRankSym(d=[1.0], U=np.array([[1.0], [0.0]]))
        for eps in (1e-2, 1e-3, 1e-4):
            Psi = eps * np.array([[0.0, 1.0], [1.0, 0.0]])
            approx = small_eig_second_order(A, Psi)
            assert approx.shape == (1,)
            assert approx[0] == pytest.approx(-eps * eps, abs=1e-15)
            exact = (1.0 - math.sqrt(1.0 + 4.0 * eps * eps)) / 2.0
            assert abs(approx[0] - exact) <= 8.0 * eps ** 4

    def test_cubic_error_scaling_on_random_instances(self):
        rng = np.random.default_rng(2)
        for trial in range(10):
            A = random_instance(rng, 5, 2)
            # big enough that the cubic term dominates solver noise, small
            # enough that the quartic term barely moves the ratio
            h = min(1e-2, 0.5 * expansion_regime_bound(A))
            direction = random_psi(rng, 5, 1.0)

            def error_at(norm):
                Psi = norm * direction
                exact = sym_eig(A.matrix() + Psi).values[2:]
                return np.max(np.abs(exact - small_eig_second_order(A, Psi)))

            ratio = error_at(h) / error_at(h / 2.0)
            assert 6.0 <= ratio <= 10.0, f"trial {trial}: ratio {ratio}"

    def test_rotation_invariance_of_complement_choice(self):
        rng = np.random.default_rng(3)
        A = random_instance(rng, 6, 2)
        Psi = random_psi(rng, 6, 1e-3)
        base = small_eig_second_order(A, Psi)
        R = np.linalg.qr(rng.standard_normal((4, 4)))[0]
        rotated = LowRankSym(d=A.d, U=A.U, Q=A.Q @ R)
        np.testing.assert_allclose(
            small_eig_second_order(rotated, Psi), base, atol=1e-10
        )

    def test_out_of_regime_warns_but_returns(self):
        rng = np.random.default_rng(4)
        A = random_instance(rng, 4, 1)
        Psi = random_psi(rng, 4, 10.0 * expansion_regime_bound(A))
        with pytest.warns(ExpansionRegimeWarning):
            out = small_eig_second_order(A, Psi)
        assert out.shape == (3,)

    def test_in_regime_silent(self):
        rng = np.random.default_rng(5)
        A = random_instance(rng, 4, 1)
        Psi = random_psi(rng, 4, 0.5 * expansion_regime_bound(A))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            small_eig_second_order(A, Psi)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(6)
        A = random_instance(rng, 4, 1)
        with pytest.raises(InvalidInput):
            small_eig_second_order(A, np.zeros((5, 5)))


class TestSmallEigFirstOrder:
    def test_zero_perturbation(self):
        rng = np.random.default_rng(7)
        A = random_instance(rng, 5, 2)
        np.testing.assert_allclose(
            small_eig_first_order(A, np.zeros((5, 5))), np.zeros(3)
        )

    def test_identity_perturbation_on_null_space(self):
        A = LowRankSym(d=[1.0], U=np.eye(3)[:, :1])
        eps = 1e-3
        np.testing.assert_allclose(
            small_eig_first_order(A, eps * np.eye(3)), [eps, eps], atol=1e-15
        )

    def test_quadratic_error_scaling(self):
        rng = np.random.default_rng(8)
        for trial in range(10):
            A = random_instance(rng, 5, 2)
            h = min(1e-2, 0.5 * expansion_regime_bound(A))
            direction = random_psi(rng, 5, 1.0)

            def error_at(norm):
                Psi = norm * direction
                exact = sym_eig(A.matrix() + Psi).values[2:]
                return np.max(np.abs(exact - small_eig_first_order(A, Psi)))

            ratio = error_at(h) / error_at(h / 2.0)
            assert 3.0 <= ratio <= 5.0, f"trial {trial}: ratio {ratio}"


class TestLargeEigExpansion:
    def test_zero_perturbation_returns_eigenpair(self):
        rng = np.random.default_rng(9)
        A = random_instance(rng, 5, 2)
        value, vector = large_eig_eigvec_first_order(A, np.zeros((5, 5)), 1)
        assert value == pytest.approx(A.d[0])
        np.testing.assert_allclose(vector, A.U[:, 0], atol=1e-12)

    def test_two_by_two_closed_form(self):
        A = LowRankSym(d=[2.0], U=np.array([[1.0], [0.0]]))
        eps = 1e-3
        Psi = eps * np.array([[0.0, 1.0], [1.0, 0.0]])
        value, vector = large_eig_eigvec_first_order(A, Psi, 1)
        assert value == pytest.approx(2.0, abs=1e-15)
        expected = np.array([1.0, eps / 2.0])
        expected /= np.linalg.norm(expected)
        np.testing.assert_allclose(vector, expected, atol=1e-12)

    def test_value_error_scaling(self):
        rng = np.random.default_rng(10)
        for trial in range(10):
            A = random_instance(rng, 5, 2)
            h = 1e-4
            direction = random_psi(rng, 5, 1.0)

            def error_at(norm):
                Psi = norm * direction
                exact = sym_eig(A.matrix() + Psi).values[0]
                approx, _ = large_eig_eigvec_first_order(A, Psi, 1)
                return abs(exact - approx)

            ratio = error_at(h) / error_at(h / 2.0)
            assert 3.0 <= ratio <= 5.0, f"trial {trial}: ratio {ratio}"

    def test_index_out_of_range(self):
        rng = np.random.default_rng(11)
        A = random_instance(rng, 4, 2)
        with pytest.raises(InvalidInput):
            large_eig_eigvec_first_order(A, np.zeros((4, 4)), 3)
        with pytest.raises(InvalidInput):
            large_eig_eigvec_first_order(A, np.zeros((4, 4)), 0)


class TestSpectralStability:
    def test_squared_eigenvalue_moves_bounded_by_perturbation_norm(self):
        rng = np.random.default_rng(12)
        for trial in range(25):
            K = int(rng.integers(3, 9))
            k = int(rng.integers(1, K))
            A = random_instance(rng, K, k)
            Psi = random_psi(rng, K, float(rng.uniform(1e-4, 1.0)))
            before = sym_eig(A.matrix()).values
            after = sym_eig(A.matrix() + Psi).values
            moves = np.sum((after - before) ** 2)
            assert moves <= np.linalg.norm(Psi, "fro") ** 2 + 1e-12
