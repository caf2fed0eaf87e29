"""Closed-form eigenvalue-spacing densities and simulated local power curves.

The densities describe spacings of small Gaussian-orthogonal-ensemble
matrices; the power operations simulate rejection rates of the spacing
statistics against a rank-one mean shift of magnitude ``a`` added to the
limit matrix, holding the noise draws fixed across the shift grid.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import InvalidInput, InvalidParameter
from .nulldist import SimulatedLaw, _sample_Z_indep, _spacing_draws

__all__ = [
    "PowerCurve",
    "wigner_surmise_pdf",
    "goe3_joint_spacing_pdf",
    "goe3_total_spacing_pdf",
    "goe3_spacing_ratio_pdf",
    "local_power_gaussian",
    "local_power_nongaussian_T2",
    "general_T2_weights",
]

_JOINT_NORM = 1.0 / (4.0 * math.sqrt(6.0 * math.pi))


def _eval_nonneg(x, formula):
    """Evaluate formula(x) where x >= 0 and return 0 elsewhere."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.where(x >= 0.0, formula(x), 0.0)
    return float(out[0]) if scalar else out


def wigner_surmise_pdf(s):
    """Spacing density of a 2x2 symmetric Gaussian matrix: (s/4) exp(-s^2/8)."""
    return _eval_nonneg(s, lambda t: (t / 4.0) * np.exp(-np.square(t) / 8.0))


def goe3_joint_spacing_pdf(s1, s2):
    """Joint density of the two eigenvalue spacings of a 3x3 GOE matrix.

    Vanishes for negative arguments; symmetric in (s1, s2).
    """
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    scalar = s1.ndim == 0 and s2.ndim == 0
    s1, s2 = np.broadcast_arrays(np.atleast_1d(s1), np.atleast_1d(s2))
    val = (_JOINT_NORM
           * np.exp(-(np.square(s1) + np.square(s2) + s1 * s2) / 6.0)
           * s1 * s2 * (s1 + s2))
    out = np.where((s1 >= 0.0) & (s2 >= 0.0), val, 0.0)
    return float(out[0]) if scalar else out


def goe3_total_spacing_pdf(s):
    """Density of the top-to-bottom eigenvalue spread of a 3x3 GOE matrix."""
    def formula(t):
        erf_part = 2.0 * ndtr(t / (2.0 * math.sqrt(3.0))) - 1.0
        bracket = (erf_part * (np.square(t) / 4.0 - 3.0)
                   + (3.0 * t / math.sqrt(6.0 * math.pi))
                   * np.exp(-np.square(t) / 24.0))
        return (t / 4.0) * np.exp(-np.square(t) / 8.0) * bracket

    return _eval_nonneg(s, formula)


def goe3_spacing_ratio_pdf(r):
    """Density of the ratio of consecutive spacings of a 3x3 GOE matrix."""
    def formula(t):
        t2 = np.square(t)
        return (27.0 / 8.0) * (t + t2) / np.power(1.0 + t + t2, 2.5)

    return _eval_nonneg(r, formula)


@dataclass(frozen=True)
class PowerCurve:
    """Rejection rates of a spacing statistic along a grid of shift magnitudes.

    grid holds the dimensionless shift values, power the corresponding
    simulated rejection frequencies at nominal level alpha, estimated from
    R common-random-number draws of the (T_minus_k)-dimensional limit matrix.
    """

    grid: np.ndarray
    power: np.ndarray
    T_minus_k: int
    alpha: float
    R: int
    statistic: str = "S"

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        power = np.asarray(self.power, dtype=float)
        if grid.ndim != 1 or grid.size == 0 or not np.all(np.isfinite(grid)):
            raise InvalidInput("grid must be a non-empty finite 1-D array")
        if power.shape != grid.shape:
            raise InvalidInput(
                f"power shape {power.shape} does not match grid {grid.shape}")
        if np.any(power < 0.0) or np.any(power > 1.0):
            raise InvalidInput("power values must lie in [0, 1]")
        if self.T_minus_k < 2:
            raise InvalidInput(f"T_minus_k must be >= 2, got {self.T_minus_k}")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidParameter(f"alpha must be in (0,1), got {self.alpha}")
        if self.R < 1:
            raise InvalidInput(f"R must be positive, got {self.R}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "power", power)


def _check_power_args(alpha, a_grid, R):
    if not 0.0 < alpha < 1.0:
        raise InvalidParameter(f"alpha must be in (0,1), got {alpha}")
    a_grid = np.asarray(a_grid, dtype=float)
    if a_grid.ndim != 1 or a_grid.size == 0 or not np.all(np.isfinite(a_grid)):
        raise InvalidInput("a_grid must be a non-empty finite 1-D array")
    if R < 1:
        raise InvalidInput(f"R must be positive, got {R}")
    return a_grid


def local_power_gaussian(T_minus_k, alpha, a_grid, R, seed, statistic="S",
                         k_star_minus_k=None):
    """Simulated power of a spacing statistic under a Gaussian limit.

    Draws R matrices from the standard GOE of dimension T_minus_k, takes
    the (1-alpha) order-statistic of the null statistic as the critical
    value, then adds each grid value a to the (1,1) entry of the same
    draws and records the rejection frequency.

    statistic "S" is the top-to-bottom eigenvalue spread; "S_star" is the
    largest ratio of consecutive spacings over the first k_star_minus_k
    spacing positions (default: all of them, requires T_minus_k >= 3).
    """
    m = int(T_minus_k)
    if m < 2:
        raise InvalidInput(f"T_minus_k must be >= 2, got {T_minus_k}")
    a_grid = _check_power_args(alpha, a_grid, R)
    if statistic == "S":
        n_ratios = 0
    elif statistic == "S_star":
        if m < 3:
            raise InvalidInput("S_star needs T_minus_k >= 3")
        if k_star_minus_k is None:
            k_star_minus_k = m - 2
        if not 1 <= k_star_minus_k <= m - 2:
            raise InvalidInput(
                f"k_star_minus_k must be in [1, {m - 2}], got {k_star_minus_k}")
        n_ratios = int(k_star_minus_k)
    else:
        raise InvalidParameter(f"unknown statistic {statistic!r}")

    rng = np.random.default_rng(seed)
    Z = _sample_Z_indep(m, 2.0, 1.0, R, rng)
    base_diag = Z[:, 0, 0].copy()

    def stat_of_current():
        _, total, ratios = _spacing_draws(Z, n_ratios)
        return total if statistic == "S" else ratios

    null_stats = stat_of_current()
    tau = SimulatedLaw(draws=np.sort(null_stats), R=R, seed=seed).critical_value(alpha)
    power = np.empty(a_grid.size)
    for i, a in enumerate(a_grid):
        Z[:, 0, 0] = base_diag + a
        power[i] = np.mean(stat_of_current() > tau)
    return PowerCurve(grid=a_grid, power=power, T_minus_k=m, alpha=float(alpha),
                      R=int(R), statistic=statistic)


def local_power_nongaussian_T2(eta_star, phi, alpha, a_grid, R, seed):
    """Simulated power for the two-dimensional limit with excess kurtosis.

    The squared statistic follows a weighted sum of two independent
    one-degree noncentral chi-squares; both components are simulated as
    squared shifted normals with the noise fixed across the shift grid.
    eta_star = 2 recovers the Gaussian case.
    """
    if eta_star <= 0.0:
        raise InvalidParameter(f"eta_star must be positive, got {eta_star}")
    if not 0.0 <= phi <= 1.0:
        raise InvalidParameter(f"phi must be in [0,1], got {phi}")
    a_grid = _check_power_args(alpha, a_grid, R)
    rng = np.random.default_rng(seed)
    g1 = rng.standard_normal(R)
    g2 = rng.standard_normal(R)
    w1 = eta_star / 2.0

    def stat(a):
        nc1 = (a * a / (2.0 * eta_star)) * (1.0 - 2.0 * phi) ** 2
        nc2 = a * a * phi * (1.0 - phi)
        return (w1 * np.square(g1 + math.sqrt(nc1))
                + np.square(g2 + math.sqrt(nc2)))

    null_stats = stat(0.0)
    tau = SimulatedLaw(draws=np.sort(null_stats), R=R, seed=seed).critical_value(alpha)
    power = np.array([np.mean(stat(a) > tau) for a in a_grid])
    return PowerCurve(grid=a_grid, power=power, T_minus_k=2, alpha=float(alpha),
                      R=int(R), statistic="S")


def general_T2_weights(Q, eta_star, a):
    """Weights and noncentralities of the two-dimensional squared-statistic law.

    Q carries the two orthonormal residual directions; the returned tuple
    (d1, d2, mu1, mu2) parameterizes the limit d1*chi2(1, mu1) +
    d2*chi2(1, mu2) of the scaled squared spacing statistic under a shift
    of magnitude a.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[1] != 2 or Q.shape[0] < 2:
        raise InvalidInput(f"Q must be T x 2 with T >= 2, got {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise InvalidInput("Q contains non-finite entries")
    gram = Q.T @ Q
    if np.max(np.abs(gram - np.eye(2))) > 1e-8:
        raise InvalidInput("Q columns must be orthonormal")
    if eta_star <= 0.0:
        raise InvalidParameter(f"eta_star must be positive, got {eta_star}")

    q1sq = np.square(Q[:, 0])
    q2sq = np.square(Q[:, 1])
    cross = Q[:, 0] * Q[:, 1]
    s11 = 0.25 * np.sum(np.square(q1sq - q2sq))
    s22 = np.sum(np.square(cross))
    s12 = 0.5 * np.sum((q1sq - q2sq) * cross)
    lam = np.linalg.eigvalsh(np.array([[s11, s12], [s12, s22]]))
    lam1, lam2 = lam[1], lam[0]
    d1 = 1.0 + (eta_star - 2.0) * lam1
    d2 = 1.0 + (eta_star - 2.0) * lam2
    # Squared overlap of the shift direction with the leading eigenvector;
    # a zero denominator means the direction is itself that eigenvector.
    den = s12 * s12 + (lam1 - s11) ** 2
    ratio = 1.0 if den < 1e-300 else (s12 * s12) / den
    mu1 = (a * a / (4.0 * d1)) * ratio
    mu2 = (a * a / (4.0 * d2)) * (1.0 - ratio)
    return float(d1), float(d2), float(mu1), float(mu2)
