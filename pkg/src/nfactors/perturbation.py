"""Eigenvalue perturbation expansions for low-rank symmetric matrices.

A rank-``k`` symmetric matrix ``A = U diag(d) U'`` is perturbed by a small
symmetric ``Psi``. The routines here return closed-form expansions of the
eigenvalues of ``A + Psi``:

* the ``K - k`` eigenvalues near zero, to first and to second order in
  ``Psi`` (the second-order form has a cubic remainder, uniform over the
  validity regime),
* the ``k`` large eigenvalues and their eigenvectors, to first order.

All expansions are exact matrix formulas in ``U``, ``Q`` (an orthonormal
null-space basis) and ``d``; no iterative refinement is involved.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ExpansionRegimeWarning, InvalidInput
from .linalg import ORTHO_TOL, complement_basis, sym_eig, symmetrize

#: minimum pairwise gap and minimum magnitude for the non-zero eigenvalues
EIGENVALUE_GAP_TOL = 1e-10


@dataclass
class LowRankSym:
    """Symmetric matrix of known low rank in factored form.

    Attributes
    ----------
    d : ndarray, shape (k,)
        Non-zero eigenvalues, descending, pairwise distinct and bounded
        away from zero (gap and magnitude at least 1e-10).
    U : ndarray, shape (K, k)
        Orthonormal eigenvectors for ``d``.
    Q : ndarray, shape (K, K - k)
        Orthonormal basis of the null space.
    """

    d: np.ndarray
    U: np.ndarray
    Q: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.d = np.atleast_1d(np.asarray(self.d, dtype=float))
        self.U = np.asarray(self.U, dtype=float)
        if self.U.ndim != 2 or self.U.shape[1] != self.d.shape[0]:
            raise InvalidInput(
                f"U shape {self.U.shape} does not match {self.d.shape[0]} eigenvalues"
            )
        K, k = self.U.shape
        if k < 1 or k >= K:
            raise InvalidInput(f"rank must satisfy 1 <= k < K, got k={k}, K={K}")
        if np.min(np.abs(self.d)) < EIGENVALUE_GAP_TOL:
            raise InvalidInput("non-zero eigenvalues must have magnitude >= 1e-10")
        if k > 1:
            gaps = np.abs(np.subtract.outer(self.d, self.d))
            if np.min(gaps[~np.eye(k, dtype=bool)]) < EIGENVALUE_GAP_TOL:
                raise InvalidInput("non-zero eigenvalues must be pairwise distinct")
        if np.max(np.abs(self.U.T @ self.U - np.eye(k))) > ORTHO_TOL:
            raise InvalidInput("columns of U are not orthonormal")
        if self.Q is None:
            self.Q = complement_basis(self.U)
        else:
            self.Q = np.asarray(self.Q, dtype=float)
        if self.Q.shape != (K, K - k):
            raise InvalidInput(f"Q shape {self.Q.shape}, expected {(K, K - k)}")
        if np.max(np.abs(self.Q.T @ self.Q - np.eye(K - k))) > ORTHO_TOL:
            raise InvalidInput("columns of Q are not orthonormal")
        if np.max(np.abs(self.U.T @ self.Q)) > ORTHO_TOL:
            raise InvalidInput("U and Q are not orthogonal")

    @property
    def dim(self) -> int:
        return self.U.shape[0]

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    def matrix(self) -> np.ndarray:
        """Reassemble the dense matrix ``U diag(d) U'``."""
        M = (self.U * self.d) @ self.U.T
        return (M + M.T) / 2.0

    @classmethod
    def from_matrix(cls, S, rank: int) -> "LowRankSym":
        """Factor a dense symmetric matrix whose rank is known.

        The ``rank`` eigenvalues of largest magnitude become ``d`` (kept in
        descending value order); the remaining eigenvalues must vanish
        within ``1e-8 * (1 + max |d|)``.
        """
        eig = sym_eig(S)
        K = eig.values.shape[0]
        if not 1 <= rank < K:
            raise InvalidInput(f"rank must satisfy 1 <= rank < K, got {rank}")
        order = np.argsort(-np.abs(eig.values), kind="stable")
        keep = np.sort(order[:rank])
        drop = np.sort(order[rank:])
        scale = 1.0 + float(np.max(np.abs(eig.values[keep])))
        if np.max(np.abs(eig.values[drop])) > 1e-8 * scale:
            raise InvalidInput("matrix is not of the stated rank")
        return cls(d=eig.values[keep], U=eig.vectors[:, keep])


def inverse_spectrum_norm(A: LowRankSym) -> float:
    """Frobenius norm of the inverted non-zero spectrum, sqrt(sum d_j^-2)."""
    return float(np.sqrt(np.sum(A.d ** -2.0)))


def expansion_regime_bound(A: LowRankSym) -> float:
    """Largest perturbation Frobenius norm with a guaranteed cubic remainder.

    Equals ``1 / (3 * inverse_spectrum_norm(A) * (K + 1)^(3/2))`` for
    ambient dimension ``K``.
    """
    return 1.0 / (3.0 * inverse_spectrum_norm(A) * (A.dim + 1) ** 1.5)


def _check_psi(A: LowRankSym, Psi) -> np.ndarray:
    Psi = symmetrize(Psi)
    if Psi.shape[0] != A.dim:
        raise InvalidInput(
            f"perturbation dimension {Psi.shape[0]} does not match matrix dimension {A.dim}"
        )
    if np.linalg.norm(Psi) > expansion_regime_bound(A):
        warnings.warn(
            "perturbation norm exceeds the guaranteed expansion regime; "
            "the approximation is returned anyway",
            ExpansionRegimeWarning,
            stacklevel=3,
        )
    return Psi


def small_eig_second_order(A: LowRankSym, Psi) -> np.ndarray:
    """Second-order expansion of the K-k near-zero eigenvalues of A + Psi.

    Returns the descending eigenvalues of
    ``Q' Psi Q - Q' Psi U diag(1/d) U' Psi Q``, which approximate
    eigenvalues ``k+1 .. K`` of ``A + Psi`` with a cubic error in
    ``‖Psi‖``. Outside the validity regime an
    :class:`~nfactors.errors.ExpansionRegimeWarning` is emitted and the
    formula is still evaluated.
    """
    Psi = _check_psi(A, Psi)
    PsiQ = Psi @ A.Q
    core = A.Q.T @ PsiQ
    cross = A.U.T @ PsiQ  # k x (K-k)
    core = core - cross.T @ (cross / A.d[:, None])
    vals = np.linalg.eigvalsh((core + core.T) / 2.0)
    return vals[::-1].copy()


def small_eig_first_order(A: LowRankSym, Psi) -> np.ndarray:
    """First-order expansion of the near-zero eigenvalues: eigenvalues of Q'PsiQ."""
    Psi = _check_psi(A, Psi)
    core = A.Q.T @ Psi @ A.Q
    vals = np.linalg.eigvalsh((core + core.T) / 2.0)
    return vals[::-1].copy()


def large_eig_eigvec_first_order(A: LowRankSym, Psi, j: int):
    """First-order expansion of the j-th large eigenpair of A + Psi.

    Parameters
    ----------
    A : LowRankSym
    Psi : array_like
        Symmetric perturbation of matching dimension.
    j : int
        One-based index into the non-zero eigenvalues (descending).

    Returns
    -------
    (float, ndarray)
        The expanded eigenvalue ``d_j + u_j' Psi u_j`` and the expanded
        eigenvector, normalized to unit length. The eigenvector correction
        sums ``(lambda_j - lambda_l)^{-1} P_l Psi u_j`` over the other
        eigenspaces, including the null space at ``lambda_0 = 0``.
    """
    if not 1 <= j <= A.rank:
        raise InvalidInput(f"index j must be in 1..{A.rank}, got {j}")
    Psi = symmetrize(Psi)
    if Psi.shape[0] != A.dim:
        raise InvalidInput(
            f"perturbation dimension {Psi.shape[0]} does not match matrix dimension {A.dim}"
        )
    lam = A.d[j - 1]
    gaps = [abs(lam)] + [abs(lam - A.d[l]) for l in range(A.rank) if l != j - 1]
    if np.linalg.norm(Psi) > 0.5 * min(gaps):
        warnings.warn(
            "perturbation norm is not small relative to the eigenvalue gaps",
            ExpansionRegimeWarning,
            stacklevel=2,
        )
    u = A.U[:, j - 1]
    Psi_u = Psi @ u
    value = lam + float(u @ Psi_u)
    vector = u + (A.Q @ (A.Q.T @ Psi_u)) / lam
    for l in range(A.rank):
        if l == j - 1:
            continue
        ul = A.U[:, l]
        vector = vector + ul * (float(ul @ Psi_u) / (lam - A.d[l]))
    return value, vector / np.linalg.norm(vector)
