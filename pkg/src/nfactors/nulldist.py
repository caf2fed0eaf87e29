"""Null distributions: variance estimators, simulated laws, subsampling.

The limiting null distributions of the spacing statistics are functionals
of a random symmetric matrix ``Z*`` whose law depends on the error
structure. This module estimates that law from residuals under three
designs (independent errors with common fourth-moment parameters, a
parametric volatility-clustering family, and a fully nonparametric
projected covariance), simulates the statistic draws, and turns statistics
into p-values. The instrument statistic's weighted chi-square law and the
subsampling critical values for the weak-factor statistic live here too.

Simulation routines take an integer seed and are bit-reproducible.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from .errors import (
    ClippedEstimateWarning,
    IdentificationFailure,
    InvalidInput,
    InvalidParameter,
    SimulationFailure,
    SmallSampleWarning,
)
from .linalg import ORTHO_TOL, kron
from .stats import PanelData, FactorFit, InstrumentFit, _as_rows

#: eigenvalue floor (relative) below which a "PSD" matrix is considered broken
PSD_FLOOR = 1e-8

#: clip level for variance components estimated at or below zero
VARIANCE_CLIP = 1e-12


# ---------------------------------------------------------------------------
# variance specifications (tagged union)

@dataclass
class IndepErrors:
    """Independent-errors law: diagonal variance ``eta``, off-diagonal ``q``."""

    eta: float
    q: float

    def __post_init__(self):
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise InvalidParameter(f"eta must be positive, got {self.eta}")
        if not (self.q > 0 and math.isfinite(self.q)):
            raise InvalidParameter(f"q must be positive, got {self.q}")


@dataclass
class ArchParam:
    """Volatility-clustering law with linear parameters (q, q psi(0), ..., q psi(T-1))."""

    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if self.theta.ndim != 1 or self.theta.shape[0] < 3:
            raise InvalidParameter(
                f"theta must be a vector of length T+1 >= 3, got shape {self.theta.shape}"
            )
        if not np.all(np.isfinite(self.theta)):
            raise InvalidParameter("theta has non-finite entries")

    @property
    def T(self) -> int:
        return self.theta.shape[0] - 1


@dataclass
class Nonparam:
    """Nonparametric law: covariance of vec(Z*) on the projected (T-k)^2 space."""

    omega_bar: np.ndarray

    def __post_init__(self):
        self.omega_bar = np.asarray(self.omega_bar, dtype=float)
        d = self.omega_bar.shape[0]
        if self.omega_bar.ndim != 2 or self.omega_bar.shape != (d, d):
            raise InvalidParameter(f"omega_bar must be square, got {self.omega_bar.shape}")
        m = round(math.isqrt(d))
        if m * m != d:
            raise InvalidParameter(f"omega_bar size {d} is not a perfect square")
        if not np.all(np.isfinite(self.omega_bar)):
            raise InvalidParameter("omega_bar has non-finite entries")
        if np.max(np.abs(self.omega_bar - self.omega_bar.T)) > 1e-8:
            raise InvalidParameter("omega_bar is not symmetric")

    @property
    def m(self) -> int:
        return round(math.isqrt(self.omega_bar.shape[0]))


@dataclass
class InstrHomo:
    """Homoskedastic instrument law: scalar variance times complement eigenvalues."""

    sigma2: float
    weights: np.ndarray

    def __post_init__(self):
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise InvalidParameter(f"sigma2 must be positive, got {self.sigma2}")
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise InvalidParameter("weights must be non-negative and finite")


@dataclass
class InstrGeneral:
    """General instrument law: non-negative eigenvalue weights of the sandwich matrix."""

    lam: np.ndarray

    def __post_init__(self):
        self.lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        if np.any(self.lam < 0) or not np.all(np.isfinite(self.lam)):
            raise InvalidParameter("lambda weights must be non-negative and finite")


NullVarianceSpec = Union[IndepErrors, ArchParam, Nonparam, InstrHomo, InstrGeneral]


@dataclass
class SimulatedLaw:
    """Sorted Monte Carlo draws from a null law."""

    draws: np.ndarray
    R: int
    seed: int

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 1 or self.draws.shape[0] != self.R:
            raise InvalidInput(f"expected {self.R} draws, got shape {self.draws.shape}")
        if np.any(np.diff(self.draws) < 0):
            raise InvalidInput("draws must be sorted ascending")
        if self.R < 1000:
            warnings.warn(
                f"only R={self.R} draws; production use should have R >= 1000",
                SmallSampleWarning,
                stacklevel=2,
            )

    def critical_value(self, alpha: float) -> float:
        """Empirical (1 - alpha) quantile, order statistic ceil((1-alpha) R)."""
        if not 0 < alpha < 1:
            raise InvalidInput(f"alpha must be in (0,1), got {alpha}")
        idx = int(math.ceil((1.0 - alpha) * self.R - 1e-9))
        idx = min(max(idx, 1), self.R)
        return float(self.draws[idx - 1])


def pvalue(stat_value: float, law: SimulatedLaw) -> float:
    """Monte Carlo p-value with add-one smoothing, (1 + #{draws >= stat}) / (R + 1)."""
    count = law.R - int(np.searchsorted(law.draws, stat_value, side="left"))
    return (1.0 + count) / (law.R + 1.0)


# ---------------------------------------------------------------------------
# moment estimators

def estimate_sigma2(fit: FactorFit) -> float:
    """Degrees-of-freedom corrected residual variance, sum(eps^2) / (n (T-k))."""
    eps = fit.residuals
    m = fit.T - fit.k
    if m <= 0:
        raise InvalidInput("estimate_sigma2 needs T > k")
    return float(np.sum(eps * eps) / (eps.shape[0] * m))


def estimate_eta_q(fit: FactorFit):
    """Fourth-moment parameters (eta, q) under time-independent errors.

    Matches the two residual moments

    ``m1 = (1/n) sum_i (sum_t eps_it^2)^2`` and
    ``m2 = (1/n) sum_i sum_t eps_it^4``

    to their expected values ``a eta + b q`` and ``c eta + d q``, where the
    coefficients are polynomials in the entries of the residual projector:
    ``a = sum_t M_tt^2``, ``b = 2(T-k-a) + (T-k)^2``,
    ``c = sum_ts M_ts^4``, ``d = 3a - 2c``.

    Returns
    -------
    (float, float, dict)
        eta, q (negative solutions clipped to 1e-12 with a warning) and the
        coefficient dict {"a","b","c","d"}.

    Raises
    ------
    IdentificationFailure
        If the 2x2 moment system is singular within relative tolerance
        1e-8 (equivalently 3a^2 = c (T-k)(T-k+2)).
    """
    M = fit.M_Fhat
    eps = fit.residuals
    m = fit.T - fit.k
    a = float(np.sum(np.diag(M) ** 2))
    b = 2.0 * (m - a) + float(m * m)
    c = float(np.sum(M ** 4))
    d = 3.0 * a - 2.0 * c
    lhs = 3.0 * a * a
    rhs = c * m * (m + 2)
    if abs(lhs - rhs) <= 1e-8 * max(abs(lhs), abs(rhs)):
        raise IdentificationFailure(
            "moment system for (eta, q) is singular: 3a^2 = c (T-k)(T-k+2)"
        )
    det = a * d - b * c
    rowsq = np.sum(eps * eps, axis=1)
    m1 = float(np.mean(rowsq ** 2))
    m2 = float(np.mean(np.sum(eps ** 4, axis=1)))
    eta = (d * m1 - b * m2) / det
    q = (a * m2 - c * m1) / det
    if eta < 0 or q < 0:
        warnings.warn(
            f"negative fourth-moment solution (eta={eta:.3e}, q={q:.3e}) clipped",
            ClippedEstimateWarning,
            stacklevel=2,
        )
        eta = max(eta, VARIANCE_CLIP)
        q = max(q, VARIANCE_CLIP)
    return eta, q, {"a": a, "b": b, "c": c, "d": d}


# ---------------------------------------------------------------------------
# independent-errors simulation

def _sample_Z_indep(T: int, eta: float, q: float, R: int, rng) -> np.ndarray:
    """R independent symmetric matrices, diagonal N(0,eta), off-diagonal N(0,q)."""
    diag = rng.standard_normal((R, T)) * math.sqrt(eta)
    off = rng.standard_normal((R, T * (T - 1) // 2)) * math.sqrt(q)
    Z = np.zeros((R, T, T))
    iu = np.triu_indices(T, 1)
    Z[:, iu[0], iu[1]] = off
    Z = Z + Z.transpose(0, 2, 1)
    idx = np.arange(T)
    Z[:, idx, idx] = diag
    return Z


def simulate_Z_indep(T: int, eta: float, q: float, rng) -> np.ndarray:
    """One draw of the independent-errors limit matrix (eta = 2q gives a GOE matrix)."""
    if T < 1:
        raise InvalidInput(f"T must be positive, got {T}")
    if eta < 0 or q < 0:
        raise InvalidParameter(f"variances must be non-negative, got eta={eta}, q={q}")
    return _sample_Z_indep(T, eta, q, 1, rng)[0]


# ---------------------------------------------------------------------------
# volatility-clustering (parametric) law

@lru_cache(maxsize=16)
def _arch_structure(T: int):
    """Sparse positions of the covariance components of vec(Z), cached per T.

    Component ``l`` multiplies ``theta[l]``; entry ``(t, s)`` of Z sits at
    vec position ``s*T + t``. Component 0 carries the off-diagonal base
    variance, component 1 the diagonal variance, component h+1 the lag-h
    coupling (off-diagonal variance bump and diagonal-diagonal covariance).
    Returns a tuple of (rows, cols, vals) index triplets.
    """
    def pos(t, s):
        return s * T + t

    triplets = [([], [], []) for _ in range(T + 1)]

    def add(l, i, j, v):
        triplets[l][0].append(i)
        triplets[l][1].append(j)
        triplets[l][2].append(v)

    for t in range(T):
        add(1, pos(t, t), pos(t, t), 2.0)
    for t in range(T):
        for s in range(t + 1, T):
            h = s - t
            p1, p2 = pos(t, s), pos(s, t)
            for (i, j) in ((p1, p1), (p2, p2), (p1, p2), (p2, p1)):
                add(0, i, j, 1.0)
                add(h + 1, i, j, 2.0)
            add(h + 1, pos(t, t), pos(s, s), 2.0)
            add(h + 1, pos(s, s), pos(t, t), 2.0)
    return tuple(
        (np.asarray(r, dtype=int), np.asarray(c, dtype=int), np.asarray(v, dtype=float))
        for r, c, v in triplets
    )


def build_omega_arch(theta) -> np.ndarray:
    """Covariance of vec(Z) under the volatility-clustering parameterization.

    ``theta = (q, q psi(0), ..., q psi(T-1))`` gives
    ``Var(Z_tt) = 2 theta[1]``, ``Var(Z_{t,t+h}) = theta[0] + 2 theta[h+1]``,
    ``Cov(Z_tt, Z_{t+h,t+h}) = 2 theta[h+1]``; entries (t,s) and (s,t) are
    the same random variable and all other pairs are independent.

    Raises
    ------
    InvalidParameter
        If any implied variance is negative.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.ndim != 1 or theta.shape[0] < 3:
        raise InvalidParameter(f"theta must have length T+1 >= 3, got {theta.shape}")
    T = theta.shape[0] - 1
    if 2.0 * theta[1] < 0:
        raise InvalidParameter(f"implied diagonal variance 2*{theta[1]} is negative")
    for h in range(1, T):
        v = theta[0] + 2.0 * theta[h + 1]
        if v < 0:
            raise InvalidParameter(f"implied lag-{h} off-diagonal variance {v} is negative")
    omega = np.zeros((T * T, T * T))
    for l, (rows, cols, vals) in enumerate(_arch_structure(T)):
        omega[rows, cols] += theta[l] * vals
    return omega


def estimate_theta_md(fit: FactorFit, T: int, k: int) -> ArchParam:
    """Closed-form least-squares fit of the volatility-clustering parameters.

    Matches the projected empirical fourth-moment matrix
    ``(Q x Q)' [(1/n) sum_i (e_i e_i') kron (e_i e_i')] (Q x Q)`` against the
    model ``theta[0] vec(I)vec(I)' + Omega(theta)``, which is linear in
    ``theta``, so ordinary least squares solves the minimum-distance
    problem exactly.

    Raises
    ------
    IdentificationFailure
        If the order condition fails: with m = T - k and s = m(m+1)/2 the
        parameter count T+1 must not exceed s(s+1)/2.
    """
    if fit.T != T or fit.k != k:
        raise InvalidInput("fit does not match the stated (T, k)")
    m = T - k
    p = T + 1
    s = m * (m + 1) // 2
    if p > s * (s + 1) // 2:
        raise IdentificationFailure(
            f"order condition violated: {p} parameters but only {s * (s + 1) // 2} "
            f"distinct projected moments (T={T}, k={k})"
        )
    eps = fit.residuals
    n = eps.shape[0]
    # accumulate (1/n) sum_i vec(e_i e_i') vec(e_i e_i')' in bounded blocks
    emp = np.zeros((T * T, T * T))
    step = max(1, (1 << 22) // (T * T))
    for start in range(0, n, step):
        block = eps[start:start + step]
        W = (block[:, :, None] * block[:, None, :]).reshape(block.shape[0], T * T)
        emp += W.T @ W
    emp /= n
    P = kron(fit.Q_hat, fit.Q_hat)  # (T^2, m^2)
    target = (P.T @ emp @ P).ravel()
    structure = _arch_structure(T)
    vecI = np.zeros(T * T)
    vecI[(np.arange(T) * T) + np.arange(T)] = 1.0
    PI = P.T @ vecI
    design = np.empty((m * m * m * m, p))
    for l, (rows, cols, vals) in enumerate(structure):
        col = (P[rows].T * vals) @ P[cols]
        if l == 0:
            col = col + np.outer(PI, PI)
        design[:, l] = col.ravel()
    theta, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < p:
        warnings.warn(
            f"rank-deficient moment design (rank {rank} < {p}); "
            "returning the minimum-norm solution",
            SmallSampleWarning,
            stacklevel=2,
        )
    if theta[0] <= 0:
        warnings.warn(
            f"non-positive estimated q = {theta[0]:.3e} clipped",
            ClippedEstimateWarning,
            stacklevel=2,
        )
        theta = theta.copy()
        theta[0] = VARIANCE_CLIP
    return ArchParam(theta=theta)


# ---------------------------------------------------------------------------
# nonparametric law

def nonparam_scores(fit: FactorFit) -> np.ndarray:
    """Per-asset scores g_i whose second moment estimates the projected law.

    ``g_i = (Q' e_i) kron (Q' e_i) - (e_i'e_i / (T-k)) vec(I)``; the trace
    removal is exact because Q'M = Q'.
    """
    m = fit.T - fit.k
    E = fit.residuals @ fit.Q_hat  # rows Q' e_i
    G = (E[:, :, None] * E[:, None, :]).reshape(E.shape[0], m * m)
    tr = np.sum(fit.residuals ** 2, axis=1) / m
    vecI = np.eye(m).ravel()
    return G - tr[:, None] * vecI[None, :]


def estimate_omega_nonparam(fit: FactorFit) -> Nonparam:
    """Nonparametric covariance of the projected limit matrix, (1/n) sum g_i g_i'."""
    m = fit.T - fit.k
    if fit.n < m * m:
        warnings.warn(
            f"n={fit.n} below (T-k)^2={m * m}; nonparametric covariance may be singular",
            SmallSampleWarning,
            stacklevel=2,
        )
    G = nonparam_scores(fit)
    omega = G.T @ G / G.shape[0]
    return Nonparam(omega_bar=(omega + omega.T) / 2.0)


# ---------------------------------------------------------------------------
# simulated laws

def _psd_factor(cov: np.ndarray, on_violation: str) -> np.ndarray:
    """Factor A with A A' = cov after clipping small negative eigenvalues.

    ``on_violation`` selects the reaction to eigenvalues below the
    relative -1e-8 floor: "warn" clips with a ClippedEstimateWarning,
    "fail" raises SimulationFailure.
    """
    w, V = np.linalg.eigh((cov + cov.T) / 2.0)
    floor = -PSD_FLOOR * max(1.0, float(w[-1]))
    if w[0] < floor:
        if on_violation == "fail":
            raise SimulationFailure(
                f"covariance has eigenvalue {w[0]:.3e} below the PSD floor {floor:.3e}"
            )
        warnings.warn(
            f"covariance eigenvalue {w[0]:.3e} below the PSD floor; clipped to 0",
            ClippedEstimateWarning,
            stacklevel=3,
        )
    return V * np.sqrt(np.clip(w, 0.0, None))


def _check_q_hat(Q_hat, T: int, k: int) -> np.ndarray:
    Q = np.asarray(Q_hat, dtype=float)
    if Q.shape != (T, T - k):
        raise InvalidInput(f"Q_hat shape {Q.shape}, expected {(T, T - k)}")
    if np.max(np.abs(Q.T @ Q - np.eye(T - k))) > ORTHO_TOL:
        raise InvalidInput("Q_hat columns are not orthonormal")
    return Q


def _spacing_draws(Zstar: np.ndarray, n_ratios: int):
    """Spacing vector, total spacing and max spacing ratio per draw."""
    vals = np.linalg.eigvalsh(Zstar)[:, ::-1]
    spacings = vals[:, :-1] - vals[:, 1:]
    total = vals[:, 0] - vals[:, -1]
    ratios = None
    if n_ratios > 0:
        num = spacings[:, :n_ratios]
        den = spacings[:, 1:n_ratios + 1]
        bad = np.any(den < 1e-14, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.max(num / den, axis=1)
        r[bad] = math.inf
        ratios = r
    return spacings, total, ratios


def simulate_law_S(spec, T: int, k: int, Q_hat, R: int, seed: int,
                   k_star: Optional[int] = None):
    """Simulate the joint null law of the spacing statistics.

    Parameters
    ----------
    spec : IndepErrors | ArchParam | Nonparam
        Estimated variance specification for the limit matrix.
    T, k : int
        Panel periods and tested factor count, m = T - k >= 2.
    Q_hat : ndarray, shape (T, T - k)
        Orthonormal complement basis from the factor fit.
    R : int
        Number of draws (warns below 1000).
    seed : int
        Seed for the dedicated random stream.
    k_star : int, optional
        Upper ratio index; defaults to T - 2. Ignored (no ratio law) when
        T - k == 2, where no valid ratio index exists.

    Returns
    -------
    (SimulatedLaw, SimulatedLaw | None, ndarray)
        The law of the scaled total spacing, the law of the max spacing
        ratio (None when T - k == 2), and the raw per-draw spacing vectors
        of shape (R, T - k - 1).
    """
    if not (isinstance(spec, (IndepErrors, ArchParam, Nonparam))):
        raise InvalidInput(f"unsupported variance spec {type(spec).__name__} for the spacing law")
    m = T - k
    if m < 2:
        raise InvalidInput(f"need T - k >= 2, got T={T}, k={k}")
    if R < 1:
        raise InvalidInput(f"R must be positive, got {R}")
    Q = _check_q_hat(Q_hat, T, k)
    if m == 2:
        n_ratios = 0
    else:
        if k_star is None:
            k_star = T - 2
        if not k + 1 <= k_star <= T - 2:
            raise InvalidInput(f"need k+1 <= k_star <= T-2, got k_star={k_star}")
        n_ratios = k_star - k
    rng = np.random.default_rng(seed)
    if isinstance(spec, IndepErrors):
        Z = _sample_Z_indep(T, spec.eta, spec.q, R, rng)
        Zstar = np.matmul(Q.T, np.matmul(Z, Q))
    elif isinstance(spec, ArchParam):
        if spec.T != T:
            raise InvalidInput(f"theta is for T={spec.T}, expected T={T}")
        A = _psd_factor(build_omega_arch(spec.theta), on_violation="warn")
        flat = rng.standard_normal((R, T * T)) @ A.T
        Z = flat.reshape(R, T, T)
        Z = (Z + Z.transpose(0, 2, 1)) / 2.0
        Zstar = np.matmul(Q.T, np.matmul(Z, Q))
    else:
        if spec.m != m:
            raise InvalidInput(f"omega_bar is for T-k={spec.m}, expected {m}")
        A = _psd_factor(spec.omega_bar, on_violation="fail")
        flat = rng.standard_normal((R, m * m)) @ A.T
        Zstar = flat.reshape(R, m, m)
        Zstar = (Zstar + Zstar.transpose(0, 2, 1)) / 2.0
    spacings, total, ratios = _spacing_draws(Zstar, n_ratios)
    law_S = SimulatedLaw(draws=np.sort(total), R=R, seed=seed)
    law_Sstar = None
    if ratios is not None:
        law_Sstar = SimulatedLaw(draws=np.sort(ratios), R=R, seed=seed)
    return law_S, law_Sstar, spacings


def simulate_law_T(spec, T: int, k: int, K: int, R: int, seed: int) -> SimulatedLaw:
    """Simulate the weighted chi-square null law of the instrument statistic.

    InstrHomo weights multiply independent chi-squares with T - k degrees
    of freedom; InstrGeneral weights multiply one-degree chi-squares. All
    chi-square draws are sums of squared standard normals.
    """
    m = T - k
    if m < 1 or k < 0:
        raise InvalidInput(f"need 0 <= k < T, got T={T}, k={k}")
    if R < 1:
        raise InvalidInput(f"R must be positive, got {R}")
    rng = np.random.default_rng(seed)
    if isinstance(spec, InstrHomo):
        if spec.weights.shape[0] != K - k:
            raise InvalidInput(
                f"expected {K - k} weights for K={K}, k={k}, got {spec.weights.shape[0]}"
            )
        g = rng.standard_normal((R, K - k, m))
        chi = np.sum(g * g, axis=2)
        draws = chi @ spec.weights / T
    elif isinstance(spec, InstrGeneral):
        if spec.lam.shape[0] != m * (K - k):
            raise InvalidInput(
                f"expected {(m) * (K - k)} weights for T={T}, k={k}, K={K}, "
                f"got {spec.lam.shape[0]}"
            )
        g = rng.standard_normal((R, spec.lam.shape[0]))
        draws = (g * g) @ spec.lam / T
    else:
        raise InvalidInput(
            f"unsupported variance spec {type(spec).__name__} for the instrument law"
        )
    return SimulatedLaw(draws=np.sort(draws), R=R, seed=seed)


# ---------------------------------------------------------------------------
# instrument-route variance estimators

def estimate_lambda_hat(iv: InstrumentFit, instruments) -> InstrGeneral:
    """General sandwich-weight estimator for the instrument statistic law.

    Builds the second moment of ``w_i = e_i kron z_i``, projects it onto
    the estimated residual and instrument complements, and keeps the top
    (T-k)(K-k) eigenvalues, clipped at zero.
    """
    eps = iv.fit.residuals
    z = _as_rows(instruments)
    if eps.shape[0] != z.shape[0]:
        raise InvalidInput("residual rows and instrument rows are misaligned")
    n, T = eps.shape
    K = z.shape[1]
    k = iv.k
    W = (eps[:, :, None] * z[:, None, :]).reshape(n, T * K)
    sigma_U = W.T @ W / n
    M_gamma = np.eye(K) - iv.Gamma_hat @ iv.Gamma_hat.T
    proj = kron(iv.fit.M_Fhat, M_gamma)
    lam_mat = proj @ sigma_U @ proj
    vals = np.linalg.eigvalsh((lam_mat + lam_mat.T) / 2.0)[::-1]
    keep = vals[: (T - k) * (K - k)]
    floor = -PSD_FLOOR * max(1.0, float(keep[0]) if keep.size else 1.0)
    if np.any(keep < floor):
        warnings.warn(
            "sandwich matrix has eigenvalues below the PSD floor; clipped to 0",
            ClippedEstimateWarning,
            stacklevel=2,
        )
    return InstrGeneral(lam=np.clip(keep, 0.0, None))


def estimate_instr_homo(iv: InstrumentFit, instruments) -> InstrHomo:
    """Homoskedastic instrument-law weights, sigma2 times the complement spectrum."""
    z = _as_rows(instruments)
    if iv.fit.residuals.shape[0] != z.shape[0]:
        raise InvalidInput("residual rows and instrument rows are misaligned")
    sigma2 = estimate_sigma2(iv.fit)
    Qzz = z.T @ z / z.shape[0]
    A = iv.Pi_hat.T @ Qzz @ iv.Pi_hat
    vals = np.linalg.eigvalsh((A + A.T) / 2.0)[::-1]
    return InstrHomo(sigma2=sigma2, weights=sigma2 * np.clip(vals, 0.0, None))


# ---------------------------------------------------------------------------
# subsampling for the weak-factor statistic

def subsample_critical_value(panel, k: int, m: int, B: int, alpha: float, seed: int):
    """Subsampling critical value for the scaled eigenvalue spacing.

    Draws B subsamples of size m without replacement, computes
    ``sqrt(m) (delta_k - delta_{k+1})`` of each subsample second moment,
    and returns the empirical (1 - alpha) quantile together with all B
    draws (in draw order).
    """
    y = panel.y if isinstance(panel, PanelData) else np.asarray(panel, dtype=float)
    n, T = y.shape
    if not 1 <= k <= T - 1:
        raise InvalidInput(f"k must be in 1..{T - 1}, got {k}")
    if not 2 <= m < n:
        raise InvalidInput(f"subsample size must satisfy 2 <= m < n, got m={m}, n={n}")
    if B < 1:
        raise InvalidInput(f"B must be positive, got {B}")
    if not 0 < alpha < 1:
        raise InvalidInput(f"alpha must be in (0,1), got {alpha}")
    rng = np.random.default_rng(seed)
    idx = np.stack([rng.choice(n, size=m, replace=False) for _ in range(B)])
    sub = y[idx]  # (B, m, T)
    V = np.einsum("bit,bis->bts", sub, sub) / m
    vals = np.linalg.eigvalsh(V)[:, ::-1]
    draws = math.sqrt(m) * (vals[:, k - 1] - vals[:, k])
    order = int(math.ceil((1.0 - alpha) * B - 1e-9))
    order = min(max(order, 1), B)
    crit = float(np.sort(draws)[order - 1])
    return crit, draws
