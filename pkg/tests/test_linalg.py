"""Unit tests for the shared linear algebra primitives."""

import math

import numpy as np
import pytest

from nfactors.errors import DegenerateProjector, InvalidInput
from nfactors.linalg import (
    commutation_matrix,
    complement_basis,
    kron,
    projector_pair,
    second_moment,
    sym_eig,
    symmetrize,
    unvec,
    vec,
)


class TestSymEig:
    def test_diagonal_matrix_sorted_descending(self):
        eig = sym_eig(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(eig.values, [3.0, 2.0, 1.0])

    def test_identity_matrix(self):
        eig = sym_eig(np.eye(4))
        np.testing.assert_allclose(eig.values, np.ones(4))
        np.testing.assert_allclose(eig.vectors.T @ eig.vectors, np.eye(4), atol=1e-12)

    def test_swap_matrix_closed_form(self):
        eig = sym_eig(np.array([[0.0, 1.0], [1.0, 0.0]]))
        r = 1.0 / math.sqrt(2.0)
        np.testing.assert_allclose(eig.values, [1.0, -1.0], atol=1e-14)
        np.testing.assert_allclose(eig.vectors[:, 0], [r, r], atol=1e-14)
        np.testing.assert_allclose(eig.vectors[:, 1], [r, -r], atol=1e-14)

    def test_sign_convention_largest_entry_positive(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            A = rng.standard_normal((5, 5))
            eig = sym_eig((A + A.T) / 2.0)
            for j in range(5):
                col = eig.vectors[:, j]
                assert col[np.argmax(np.abs(col))] > 0

    def test_rejects_nonfinite(self):
        with pytest.raises(InvalidInput):
            sym_eig(np.array([[1.0, np.nan], [np.nan, 1.0]]))

    def test_reconstruction_and_shift_equivariance(self):
        rng = np.random.default_rng(5)
        for trial in range(100):
            d = int(rng.integers(2, 9))
            A = rng.standard_normal((d, d))
            S = (A + A.T) / 2.0
            eig = sym_eig(S)
            recon = (eig.vectors * eig.values) @ eig.vectors.T
            norm = np.linalg.norm(S, "fro")
            assert np.linalg.norm(recon - S, "fro") <= 1e-8 * (1.0 + norm)
            shifted = sym_eig(S + 0.37 * np.eye(d))
            np.testing.assert_allclose(shifted.values, eig.values + 0.37, atol=1e-8)


class TestSecondMoment:
    def test_single_row_outer_product(self):
        V = second_moment(np.array([[1.0, 2.0]]))
        np.testing.assert_allclose(V, [[1.0, 2.0], [2.0, 4.0]])

    def test_orthogonal_rows(self):
        V = second_moment(np.array([[1.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_allclose(V, 0.5 * np.eye(2))

    def test_plus_minus_rows(self):
        V = second_moment(np.array([[1.0, 1.0], [1.0, -1.0]]))
        np.testing.assert_allclose(V, np.eye(2), atol=1e-15)

    def test_empty_input_rejected(self):
        with pytest.raises(InvalidInput):
            second_moment(np.empty((0, 3)))


class TestComplementBasis:
    def test_coordinate_axis(self):
        Q = complement_basis(np.array([[1.0], [0.0]]))
        np.testing.assert_allclose(Q, [[0.0], [1.0]], atol=1e-14)

    def test_diagonal_direction_sign_fixed(self):
        r = 1.0 / math.sqrt(2.0)
        Q = complement_basis(np.array([[r], [r]]))
        np.testing.assert_allclose(Q[:, 0], [r, -r], atol=1e-12)

    def test_two_axes_in_r3(self):
        B = np.eye(3)[:, :2]
        Q = complement_basis(B)
        np.testing.assert_allclose(Q[:, 0], [0.0, 0.0, 1.0], atol=1e-14)

    def test_full_rank_input_rejected(self):
        with pytest.raises(InvalidInput):
            complement_basis(np.eye(2))

    def test_nonorthonormal_input_rejected(self):
        with pytest.raises(InvalidInput):
            complement_basis(np.array([[1.0], [1.0]]))

    def test_duplicated_direction_degenerate(self):
        # two orthonormal-looking columns that span only one direction
        B = np.array([[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
        with pytest.raises((DegenerateProjector, InvalidInput)):
            complement_basis(B)

    def test_spans_complement_on_random_inputs(self):
        rng = np.random.default_rng(17)
        for trial in range(100):
            T = int(rng.integers(2, 9))
            k = int(rng.integers(1, T))
            B = np.linalg.qr(rng.standard_normal((T, k)))[0]
            Q = complement_basis(B)
            assert Q.shape == (T, T - k)
            np.testing.assert_allclose(Q.T @ Q, np.eye(T - k), atol=1e-10)
            np.testing.assert_allclose(Q.T @ B, 0.0, atol=1e-10)
            span = B @ B.T + Q @ Q.T
            assert np.linalg.norm(span - np.eye(T), "fro") <= 1e-7


class TestProjectorPair:
    def test_projector_idempotent_with_correct_trace(self):
        rng = np.random.default_rng(3)
        B = np.linalg.qr(rng.standard_normal((6, 2)))[0]
        pair = projector_pair(B)
        M = pair.projector
        assert np.max(np.abs(M @ M - M)) <= 1e-8
        assert abs(np.trace(M) - 4.0) <= 1e-6
        np.testing.assert_allclose(pair.B.T @ pair.Q, 0.0, atol=1e-8)


class TestKronAndCommutation:
    def test_kron_identities(self):
        np.testing.assert_allclose(kron(np.eye(2), np.eye(2)), np.eye(4))

    def test_kron_block_layout(self):
        A = np.array([[1.0, 2.0], [3.0, 4.0]])
        J = np.array([[0.0, 1.0], [1.0, 0.0]])
        got = kron(A, J)
        expected = np.block([[1 * J, 2 * J], [3 * J, 4 * J]])
        np.testing.assert_allclose(got, expected)

    def test_commutation_order_one(self):
        np.testing.assert_allclose(commutation_matrix(1), [[1.0]])

    def test_commutation_order_two_swaps_middle_entries(self):
        K = commutation_matrix(2)
        expected = np.array(
            [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )
        np.testing.assert_allclose(K, expected)

    def test_commutation_involution(self):
        K = commutation_matrix(3)
        np.testing.assert_allclose(K @ K, np.eye(9), atol=0)

    def test_commutation_transposes_vec(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            T = int(rng.integers(2, 7))
            A = rng.standard_normal((T, T))
            K = commutation_matrix(T)
            np.testing.assert_allclose(K @ vec(A), vec(A.T), atol=1e-12)

    def test_mixed_product_with_commutation(self):
        rng = np.random.default_rng(29)
        A = rng.standard_normal((3, 3))
        B = rng.standard_normal((3, 3))
        K = commutation_matrix(3)
        np.testing.assert_allclose(K @ kron(A, B) @ K, kron(B, A), atol=1e-12)


class TestVec:
    def test_column_stacking_convention(self):
        X = np.array([[1.0, 3.0], [2.0, 4.0]])
        np.testing.assert_allclose(vec(X), [1.0, 2.0, 3.0, 4.0])

    def test_roundtrip(self):
        rng = np.random.default_rng(41)
        X = rng.standard_normal((4, 3))
        np.testing.assert_allclose(unvec(vec(X), 4), X)

    def test_kron_vec_identity(self):
        # vec(A X B') = (B kron A) vec(X), the convention every caller relies on
        rng = np.random.default_rng(43)
        A = rng.standard_normal((3, 3))
        B = rng.standard_normal((3, 3))
        X = rng.standard_normal((3, 3))
        np.testing.assert_allclose(
            vec(A @ X @ B.T), kron(B, A) @ vec(X), atol=1e-12
        )


class TestSymmetrize:
    def test_averages_small_asymmetry(self):
        S = np.array([[1.0, 2.0 + 2e-11], [2.0 - 2e-11, 3.0]])
        out = symmetrize(S)
        np.testing.assert_allclose(out, out.T)
        np.testing.assert_allclose(out[0, 1], 2.0, atol=1e-12)

    def test_rejects_large_asymmetry(self):
        with pytest.raises(InvalidInput):
            symmetrize(np.array([[1.0, 2.0], [0.0, 3.0]]))
