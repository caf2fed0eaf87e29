"""Test statistics and the shared estimation pipeline.

The panel model is ``y_i = F beta_i + eps_i`` with a fixed number of
periods ``T`` and a large cross-section ``n``. Everything here is built
from two sample second-moment matrices (never demeaned):

* ``V_y = (1/n) sum_i y_i y_i'`` (T x T), whose trailing eigenvalue
  spacings drive the spacing statistics,
* ``V_xi = (1/T) sum_t xi_t xi_t'`` (K x K), the second moment of the
  instrument-weighted portfolio aggregates ``xi_t = (1/n) sum_i z_i y_it``,
  whose trailing eigenvalue sum drives the instrument statistic.

Statistics accept either the dataclass wrappers or plain ndarrays; the
wrappers enforce the pipeline preconditions (n >= 2, T >= 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateProjector, InvalidInput
from .linalg import ORTHO_TOL, complement_basis, second_moment, sym_eig, symmetrize

#: spacing denominators below this are treated as exactly degenerate
RATIO_DENOM_TOL = 1e-14


@dataclass
class PanelData:
    """Excess-return panel, one row per asset, one column per period."""

    y: np.ndarray
    asset_ids: Optional[list] = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 2:
            raise InvalidInput(f"panel must be 2-d, got ndim {self.y.ndim}")
        n, T = self.y.shape
        if n < 2 or T < 2:
            raise InvalidInput(f"panel needs n >= 2 and T >= 2, got n={n}, T={T}")
        if not np.all(np.isfinite(self.y)):
            raise InvalidInput("panel has non-finite entries")
        if self.asset_ids is not None and len(self.asset_ids) != n:
            raise InvalidInput("asset_ids length does not match panel rows")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[1]


@dataclass
class InstrumentPanel:
    """Asset-level instruments, rows aligned with the return panel."""

    z: np.ndarray
    asset_ids: Optional[list] = None

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        if self.z.ndim != 2:
            raise InvalidInput(f"instruments must be 2-d, got ndim {self.z.ndim}")
        if self.z.shape[1] < 1:
            raise InvalidInput("need at least one instrument column")
        if not np.all(np.isfinite(self.z)):
            raise InvalidInput("instruments have non-finite entries")
        if self.asset_ids is not None and len(self.asset_ids) != self.z.shape[0]:
            raise InvalidInput("asset_ids length does not match instrument rows")

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def K(self) -> int:
        return self.z.shape[1]


def _as_rows(obj) -> np.ndarray:
    if isinstance(obj, PanelData):
        return obj.y
    if isinstance(obj, InstrumentPanel):
        return obj.z
    arr = np.asarray(obj, dtype=float)
    if arr.ndim != 2:
        raise InvalidInput(f"expected a 2-d array of rows, got ndim {arr.ndim}")
    return arr


@dataclass
class FactorFit:
    """PCA factor fit of a panel under a candidate factor count ``k``.

    ``F_hat`` holds the sqrt(T)-scaled top eigenvectors of V_y (so
    ``F_hat' F_hat / T = I_k``), ``M_Fhat = I - F_hat F_hat'/T`` is the
    residual projector, ``Q_hat`` an orthonormal basis of its range, and
    ``residuals`` the rows ``M_Fhat y_i``.
    """

    k: int
    F_hat: np.ndarray
    M_Fhat: np.ndarray
    Q_hat: np.ndarray
    residuals: np.ndarray

    def __post_init__(self):
        self.F_hat = np.asarray(self.F_hat, dtype=float)
        self.M_Fhat = np.asarray(self.M_Fhat, dtype=float)
        self.Q_hat = np.asarray(self.Q_hat, dtype=float)
        self.residuals = np.asarray(self.residuals, dtype=float)
        T = self.M_Fhat.shape[0]
        if self.F_hat.shape != (T, self.k):
            raise InvalidInput(f"F_hat shape {self.F_hat.shape}, expected {(T, self.k)}")
        if self.k > 0:
            gram = self.F_hat.T @ self.F_hat / T
            if np.max(np.abs(gram - np.eye(self.k))) > 1e-7:
                raise InvalidInput("F_hat columns are not sqrt(T)-orthonormal")
        if self.Q_hat.shape != (T, T - self.k):
            raise InvalidInput(f"Q_hat shape {self.Q_hat.shape}, expected {(T, T - self.k)}")
        if np.max(np.abs(self.Q_hat.T @ self.Q_hat - np.eye(T - self.k))) > ORTHO_TOL:
            raise InvalidInput("Q_hat columns are not orthonormal")
        if abs(np.trace(self.M_Fhat) - (T - self.k)) > 1e-6:
            raise InvalidInput("residual projector trace does not equal T - k")
        if self.residuals.shape[1] != T:
            raise InvalidInput("residual columns do not match the number of periods")

    @property
    def T(self) -> int:
        return self.M_Fhat.shape[0]

    @property
    def n(self) -> int:
        return self.residuals.shape[0]


@dataclass
class InstrumentFit:
    """Instrument-route fit: eigenstructure of V_xi plus the induced factor fit.

    ``F_hat`` is the raw ``Xi_hat @ Gamma_hat``; the residual-producing
    projector lives in ``fit``, built from the orthonormalized column space
    of ``F_hat``.
    """

    k: int
    Xi_hat: np.ndarray
    V_xi_hat: np.ndarray
    Gamma_hat: np.ndarray
    Pi_hat: np.ndarray
    F_hat: np.ndarray
    fit: FactorFit

    def __post_init__(self):
        K = self.V_xi_hat.shape[0]
        if self.Gamma_hat.shape != (K, self.k):
            raise InvalidInput(f"Gamma_hat shape {self.Gamma_hat.shape}, expected {(K, self.k)}")
        if self.Pi_hat.shape != (K, K - self.k):
            raise InvalidInput(f"Pi_hat shape {self.Pi_hat.shape}, expected {(K, K - self.k)}")
        if self.k > 0:
            if np.max(np.abs(self.Gamma_hat.T @ self.Gamma_hat - np.eye(self.k))) > ORTHO_TOL:
                raise InvalidInput("Gamma_hat columns are not orthonormal")
            if np.max(np.abs(self.Pi_hat.T @ self.Gamma_hat)) > ORTHO_TOL:
                raise InvalidInput("Pi_hat is not orthogonal to Gamma_hat")


def portfolio_aggregates(panel, instruments):
    """Instrument-weighted portfolio aggregates and their second moment.

    Returns
    -------
    (ndarray, ndarray)
        ``Xi_hat`` of shape (T, K) whose row t is
        ``xi_t' = (1/n) sum_i y_it z_i'``, and the K x K second moment
        ``V_xi_hat = Xi_hat' Xi_hat / T``.
    """
    y = _as_rows(panel)
    z = _as_rows(instruments)
    if y.shape[0] != z.shape[0]:
        raise InvalidInput(
            f"panel has {y.shape[0]} rows but instruments have {z.shape[0]}"
        )
    if y.shape[0] < 2:
        raise InvalidInput("need at least two assets")
    Xi_hat = y.T @ z / y.shape[0]
    return Xi_hat, second_moment(Xi_hat)


def _eigvals_desc(V) -> np.ndarray:
    V = symmetrize(V)
    return np.linalg.eigvalsh(V)[::-1]


def stat_T(V_xi_hat, k: int) -> float:
    """Sum of the trailing K - k eigenvalues of the aggregate second moment.

    Vanishes asymptotically under the null of k factors. Clamped at zero
    against roundoff from an (always PSD) input.
    """
    vals = _eigvals_desc(V_xi_hat)
    K = vals.shape[0]
    if not 0 <= k < K:
        raise InvalidInput(f"k must be in 0..{K - 1}, got {k}")
    return max(float(np.sum(vals[k:])), 0.0)


def stat_S(V_y_hat, k: int) -> float:
    """Trailing eigenvalue spacing delta_{k+1} - delta_T of the panel second moment."""
    vals = _eigvals_desc(V_y_hat)
    T = vals.shape[0]
    if not 0 <= k <= T - 2:
        raise InvalidInput(f"k must be in 0..{T - 2}, got {k}")
    return float(vals[k] - vals[T - 1])


def stat_S_star(V_y_hat, k: int, k_star: Optional[int] = None) -> float:
    """Maximal ratio of consecutive eigenvalue spacings below position k.

    Ratios run over j = k+1 .. k_star with numerator
    ``delta_j - delta_{j+1}`` and denominator ``delta_{j+1} - delta_{j+2}``.
    ``k_star`` defaults to its maximal legal value T - 2. A denominator
    below 1e-14 yields the +infinity sentinel (degenerate spacing, the
    test rejects there regardless).
    """
    vals = _eigvals_desc(V_y_hat)
    T = vals.shape[0]
    if k_star is None:
        k_star = T - 2
    if not (0 <= k and k + 1 <= k_star <= T - 2):
        raise InvalidInput(
            f"need 0 <= k and k+1 <= k_star <= T-2, got k={k}, k_star={k_star}, T={T}"
        )
    spacings = vals[:-1] - vals[1:]
    num = spacings[k:k_star]
    den = spacings[k + 1:k_star + 1]
    if np.any(den < RATIO_DENOM_TOL):
        return math.inf
    return float(np.max(num / den))


def stat_Delta(V_y_hat, k: int, n: int) -> float:
    """Scaled spacing sqrt(n) (delta_k - delta_{k+1}), the weak-factor statistic."""
    vals = _eigvals_desc(V_y_hat)
    T = vals.shape[0]
    if not 1 <= k <= T - 1:
        raise InvalidInput(f"k must be in 1..{T - 1}, got {k}")
    if n < 1:
        raise InvalidInput(f"n must be positive, got {n}")
    return float(math.sqrt(n) * (vals[k - 1] - vals[k]))


def pca_fit(panel, k: int) -> FactorFit:
    """PCA fit of the panel under k factors.

    The factors are the sqrt(T)-scaled top-k eigenvectors of V_y; the
    residuals are the projections of the data rows onto the orthogonal
    complement. ``k = 0`` yields the identity projector and residuals
    equal to the data.
    """
    y = _as_rows(panel)
    n, T = y.shape
    if not 0 <= k <= T - 1:
        raise InvalidInput(f"k must be in 0..{T - 1}, got {k}")
    if k == 0:
        return FactorFit(
            k=0,
            F_hat=np.empty((T, 0)),
            M_Fhat=np.eye(T),
            Q_hat=complement_basis(np.empty((T, 0))),
            residuals=y.copy(),
        )
    eig = sym_eig(second_moment(y))
    W = eig.vectors[:, :k]
    F_hat = math.sqrt(T) * W
    M = np.eye(T) - W @ W.T
    M = (M + M.T) / 2.0
    return FactorFit(
        k=k,
        F_hat=F_hat,
        M_Fhat=M,
        Q_hat=complement_basis(W),
        residuals=y @ M,
    )


def _thin_orthonormal(F: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column space of F, deterministic signs.

    QR with the diagonal of R forced positive. Raises DegenerateProjector
    if F is column-rank deficient.
    """
    Qf, R = np.linalg.qr(F)
    diag = np.diag(R)
    scale = max(1.0, float(np.max(np.abs(F))))
    if np.any(np.abs(diag) < 1e-10 * scale):
        raise DegenerateProjector("factor matrix is column-rank deficient")
    return Qf * np.sign(diag)


def iv_fit(panel, instruments, k: int) -> InstrumentFit:
    """Instrument-route fit under k factors.

    Gamma_hat collects the top-k eigenvectors of V_xi, Pi_hat its
    orthonormal complement, and F_hat = Xi_hat Gamma_hat. Residuals come
    from the projector onto the orthogonal complement of the column space
    of F_hat (orthonormalized, then sqrt(T)-scaled for the stored fit).
    """
    y = _as_rows(panel)
    n, T = y.shape
    Xi_hat, V_xi_hat = portfolio_aggregates(y, instruments)
    K = V_xi_hat.shape[0]
    if not 0 <= k < K:
        raise InvalidInput(f"k must be in 0..{K - 1}, got {k}")
    if k >= T:
        raise InvalidInput(f"k must be below T={T}, got {k}")
    if k == 0:
        Gamma_hat = np.empty((K, 0))
        Pi_hat = complement_basis(Gamma_hat)
        F_hat = np.empty((T, 0))
        fit = FactorFit(
            k=0,
            F_hat=np.empty((T, 0)),
            M_Fhat=np.eye(T),
            Q_hat=complement_basis(np.empty((T, 0))),
            residuals=y.copy(),
        )
        return InstrumentFit(0, Xi_hat, V_xi_hat, Gamma_hat, Pi_hat, F_hat, fit)
    eig = sym_eig(V_xi_hat)
    Gamma_hat = eig.vectors[:, :k]
    Pi_hat = complement_basis(Gamma_hat)
    F_hat = Xi_hat @ Gamma_hat
    W = _thin_orthonormal(F_hat)
    M = np.eye(T) - W @ W.T
    M = (M + M.T) / 2.0
    fit = FactorFit(
        k=k,
        F_hat=math.sqrt(T) * W,
        M_Fhat=M,
        Q_hat=complement_basis(W),
        residuals=y @ M,
    )
    return InstrumentFit(k, Xi_hat, V_xi_hat, Gamma_hat, Pi_hat, F_hat, fit)
