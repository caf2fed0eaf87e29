"""Dense symmetric linear algebra with fixed conventions.

Every routine in this module works on plain float ndarrays and pins down
the conventions the rest of the package relies on:

* eigenvalues are reported in descending order,
* eigenvectors are column-orthonormal with a deterministic sign (the entry
  of largest absolute value is positive, first such entry on ties),
* ``vec`` stacks columns (Fortran order), so ``kron(A, B) @ vec(X)``
  equals ``vec(B @ X @ A.T)``.

Matrices handled here are small (panels have at most a few dozen periods),
so everything is dense and exact tolerances are absolute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProjector, InvalidInput

SYM_TOL = 1e-10
ORTHO_TOL = 1e-8
PROJECTOR_TOL = 1e-7
GS_SKIP_TOL = 1e-8


def symmetrize(S) -> np.ndarray:
    """Validate a symmetric matrix and return its exactly symmetric part.

    Parameters
    ----------
    S : array_like, shape (d, d)
        Square matrix with finite entries, symmetric up to an absolute
        tolerance of 1e-10.

    Returns
    -------
    ndarray
        ``(S + S.T) / 2`` as a float array.

    Raises
    ------
    InvalidInput
        If ``S`` is not square, has non-finite entries, or is asymmetric
        beyond the tolerance.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InvalidInput("matrix has non-finite entries")
    asym = np.max(np.abs(S - S.T)) if S.size else 0.0
    if asym > SYM_TOL:
        raise InvalidInput(f"matrix is asymmetric: max |S - S'| = {asym:.3e} > {SYM_TOL}")
    return (S + S.T) / 2.0


def _fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip eigenvector columns so the largest-magnitude entry is positive.

    Ties are broken by the first index attaining the maximum, which is what
    ``np.argmax`` returns. ``V`` is modified in place and returned.
    """
    for j in range(V.shape[1]):
        i = int(np.argmax(np.abs(V[:, j])))
        if V[i, j] < 0:
            V[:, j] = -V[:, j]
    return V


@dataclass
class SymEig:
    """Eigendecomposition of a symmetric matrix.

    Attributes
    ----------
    values : ndarray, shape (d,)
        Eigenvalues sorted in descending order.
    vectors : ndarray, shape (d, d)
        Orthonormal eigenvectors, column ``j`` paired with ``values[j]``,
        signs fixed by the largest-entry-positive convention.
    """

    values: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.vectors = np.asarray(self.vectors, dtype=float)
        d = self.values.shape[0]
        if self.vectors.shape != (d, d):
            raise InvalidInput(
                f"vectors shape {self.vectors.shape} does not match {d} eigenvalues"
            )
        if np.any(np.diff(self.values) > SYM_TOL):
            raise InvalidInput("eigenvalues are not in descending order")
        gram = self.vectors.T @ self.vectors
        if np.max(np.abs(gram - np.eye(d))) > ORTHO_TOL:
            raise InvalidInput("eigenvectors are not orthonormal")


def sym_eig(S) -> SymEig:
    """Eigendecomposition with descending values and deterministic signs.

    The matrix is symmetrized (and validated) first, then decomposed with
    ``numpy.linalg.eigh``. Equal eigenvalues keep the stable order produced
    by reversing the ascending LAPACK output.
    """
    S = symmetrize(S)
    w, V = np.linalg.eigh(S)
    w = w[::-1].copy()
    V = V[:, ::-1].copy()
    return SymEig(values=w, vectors=_fix_signs(V))


def second_moment(X) -> np.ndarray:
    """Second-moment matrix ``X.T @ X / n`` of the rows of ``X``.

    Rows are observations; no demeaning is applied. The result is exactly
    symmetric.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidInput(f"expected a 2-d array of row observations, got ndim {X.ndim}")
    if X.shape[0] == 0:
        raise InvalidInput("need at least one observation row")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("observations have non-finite entries")
    V = X.T @ X / X.shape[0]
    return (V + V.T) / 2.0


def _gram_schmidt_complement(M: np.ndarray, needed: int) -> np.ndarray:
    """Orthonormalize columns of ``M`` until ``needed`` directions are found.

    Classic modified Gram-Schmidt with one re-orthogonalization pass.
    Columns whose residual norm falls below ``GS_SKIP_TOL`` are skipped and
    the scan continues with subsequent columns.

    Raises
    ------
    DegenerateProjector
        If fewer than ``needed`` independent columns are found after
        scanning every column of ``M``.
    """
    cols: list[np.ndarray] = []
    for j in range(M.shape[1]):
        if len(cols) == needed:
            break
        v = M[:, j].astype(float).copy()
        for _ in range(2):
            for u in cols:
                v -= (u @ v) * u
        nrm = float(np.linalg.norm(v))
        if nrm < GS_SKIP_TOL:
            continue
        cols.append(v / nrm)
    if len(cols) < needed:
        raise DegenerateProjector(
            f"found only {len(cols)} of {needed} independent directions"
        )
    return np.column_stack(cols) if cols else np.empty((M.shape[0], 0))


def complement_basis(B) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the columns of ``B``.

    Parameters
    ----------
    B : array_like, shape (T, k)
        Matrix with orthonormal columns (``B.T @ B = I`` within 1e-8);
        ``k = 0`` is allowed and yields the identity basis.

    Returns
    -------
    ndarray, shape (T, T - k)
        Columns built deterministically by Gram-Schmidt on the first
        ``T - k`` (or, if some are skipped, subsequent) columns of the
        projector ``I - B @ B.T``, signs fixed by the eigenvector
        convention.

    Raises
    ------
    InvalidInput
        If ``k >= T`` or the columns of ``B`` are not orthonormal.
    DegenerateProjector
        If the complement cannot be completed to rank ``T - k``.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2:
        raise InvalidInput(f"expected a 2-d array, got ndim {B.ndim}")
    T, k = B.shape
    if k >= T:
        raise InvalidInput(f"complement needs k < T, got k={k}, T={T}")
    if not np.all(np.isfinite(B)):
        raise InvalidInput("basis has non-finite entries")
    if k > 0:
        gram = B.T @ B
        if np.max(np.abs(gram - np.eye(k))) > ORTHO_TOL:
            raise InvalidInput("columns of B are not orthonormal")
        M = np.eye(T) - B @ B.T
    else:
        M = np.eye(T)
    Q = _gram_schmidt_complement(M, T - k)
    return _fix_signs(Q)


@dataclass
class ProjectorPair:
    """A basis ``B`` together with an orthonormal complement ``Q``.

    ``B @ B.T + Q @ Q.T`` resolves the identity within 1e-7.
    """

    B: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)
        T, k = self.B.shape
        if self.Q.shape != (T, T - k):
            raise InvalidInput(
                f"complement shape {self.Q.shape} does not match basis {self.B.shape}"
            )
        eye_err = 0.0
        if k > 0:
            eye_err = np.max(np.abs(self.B.T @ self.B - np.eye(k)))
        eye_err = max(eye_err, np.max(np.abs(self.Q.T @ self.Q - np.eye(T - k))))
        if eye_err > ORTHO_TOL:
            raise InvalidInput("projector pair columns are not orthonormal")
        if k > 0 and np.max(np.abs(self.B.T @ self.Q)) > ORTHO_TOL:
            raise InvalidInput("basis and complement are not orthogonal")
        resolution = self.B @ self.B.T + self.Q @ self.Q.T
        if np.max(np.abs(resolution - np.eye(T))) > PROJECTOR_TOL:
            raise InvalidInput("B B' + Q Q' does not resolve the identity")

    @property
    def projector(self) -> np.ndarray:
        """The residual projector ``I - B B'`` (equivalently ``Q Q'``)."""
        T = self.B.shape[0]
        M = np.eye(T) - self.B @ self.B.T
        return (M + M.T) / 2.0


def projector_pair(B) -> ProjectorPair:
    """Build a :class:`ProjectorPair` from a basis by completing it."""
    B = np.asarray(B, dtype=float)
    return ProjectorPair(B=B, Q=complement_basis(B))


def vec(X) -> np.ndarray:
    """Column-stacking vectorization (Fortran order)."""
    return np.asarray(X, dtype=float).reshape(-1, order="F")


def unvec(v, rows: int) -> np.ndarray:
    """Inverse of :func:`vec` for a matrix with ``rows`` rows."""
    v = np.asarray(v, dtype=float)
    if v.size % rows != 0:
        raise InvalidInput(f"cannot reshape length {v.size} into {rows} rows")
    return v.reshape(rows, v.size // rows, order="F")


def kron(A, B) -> np.ndarray:
    """Kronecker product, consistent with :func:`vec`:
    ``kron(A, B) @ vec(X) = vec(B @ X @ A.T)``."""
    return np.kron(np.asarray(A, dtype=float), np.asarray(B, dtype=float))


def commutation_matrix(T: int) -> np.ndarray:
    """Permutation ``K`` of size (T^2, T^2) with ``K @ vec(A) = vec(A.T)``."""
    if T < 1:
        raise InvalidInput(f"commutation matrix needs T >= 1, got {T}")
    K = np.zeros((T * T, T * T))
    s, t = np.divmod(np.arange(T * T), T)
    K[s * T + t, t * T + s] = 1.0
    return K
