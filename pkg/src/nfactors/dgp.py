"""Synthetic panel designs for the Monte Carlo studies.

Four designs share the factor-model skeleton y_i = F beta_i + eps_i with
per-asset error variances drawn uniformly:

* design 1: standard normal loadings, Gaussian errors;
* design 2: loadings with the last column scaled by sqrt(c * n^-kappa)
  (a factor of tunable strength) and an exactly normalized factor path;
* design 3: as design 2 with ARCH(1) errors, the factor path normalized;
* design 4: loadings driven by observed instruments plus noise, for the
  instrumented statistics.

Loadings, variances, ARCH coefficients and instruments can be held fixed
across repetitions through the fixtures object; the factor path can be
held fixed through ``F_fixed``.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .errors import InvalidInput, InvalidParameter
from .linalg import _fix_signs
from .stats import InstrumentPanel, PanelData, _thin_orthonormal

__all__ = [
    "DgpConfig",
    "DgpFixtures",
    "DgpDraw",
    "draw_fixtures",
    "draw_factor_path",
    "generate",
    "psi_moment",
]

_NORMALIZED_FACTOR_DESIGNS = (2, 3)


@dataclass(frozen=True)
class DgpConfig:
    """Parameters of one synthetic design.

    T defaults to 6 for design 2 and 12 for design 3 and must be given
    explicitly for designs 1 and 4. kappa and c control the strength of
    the last factor in designs 2 and 3; K is the instrument count of
    design 4; arch_l/arch_u bound the ARCH coefficients of design 3.
    """

    dgp: int
    n: int
    T: Optional[int] = None
    k: int = 3
    kappa: float = 0.0
    c: float = 1.0
    K: int = 10
    arch_l: float = 0.1
    arch_u: float = 0.4
    burn_in: int = 50
    sigma2_low: float = 1.0
    sigma2_high: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.dgp not in (1, 2, 3, 4):
            raise InvalidInput(f"dgp must be 1..4, got {self.dgp}")
        if self.T is None:
            if self.dgp == 2:
                object.__setattr__(self, "T", 6)
            elif self.dgp == 3:
                object.__setattr__(self, "T", 12)
            else:
                raise InvalidInput(f"T must be given for design {self.dgp}")
        if self.n < 2:
            raise InvalidInput(f"n must be >= 2, got {self.n}")
        if self.k < 1:
            raise InvalidInput(f"k must be >= 1, got {self.k}")
        if self.T < max(2, self.k):
            raise InvalidInput(f"T={self.T} too small for k={self.k}")
        if self.kappa < 0.0:
            raise InvalidParameter(f"kappa must be >= 0, got {self.kappa}")
        if self.c <= 0.0:
            raise InvalidParameter(f"c must be positive, got {self.c}")
        if not 0.0 < self.sigma2_low <= self.sigma2_high:
            raise InvalidParameter(
                f"need 0 < sigma2_low <= sigma2_high, got "
                f"[{self.sigma2_low}, {self.sigma2_high}]")
        if self.dgp == 3:
            if not 0.0 <= self.arch_l < self.arch_u:
                raise InvalidParameter(
                    f"need 0 <= arch_l < arch_u, got [{self.arch_l}, {self.arch_u}]")
            if self.arch_u ** 2 >= 1.0 / 3.0:
                raise InvalidParameter(
                    f"arch_u^2 must be < 1/3 for finite fourth moments, "
                    f"got arch_u={self.arch_u}")
            if self.burn_in < 0:
                raise InvalidInput(f"burn_in must be >= 0, got {self.burn_in}")
        if self.dgp == 4 and self.K < self.k:
            raise InvalidInput(f"need K >= k, got K={self.K}, k={self.k}")


@dataclass(frozen=True)
class DgpFixtures:
    """Cross-sectional quantities held fixed across Monte Carlo repetitions."""

    beta: np.ndarray
    sigma2: np.ndarray
    alpha: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    Gamma: Optional[np.ndarray] = None

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        sigma2 = np.asarray(self.sigma2, dtype=float)
        if beta.ndim != 2:
            raise InvalidInput(f"beta must be 2-D, got shape {beta.shape}")
        if sigma2.shape != (beta.shape[0],):
            raise InvalidInput("sigma2 length must match beta rows")
        if np.any(sigma2 <= 0.0):
            raise InvalidInput("sigma2 entries must be positive")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma2", sigma2)


@dataclass(frozen=True)
class DgpDraw:
    """One generated panel with the quantities that produced it."""

    panel: PanelData
    F_true: np.ndarray
    beta_true: np.ndarray
    sigma2_true: np.ndarray
    instruments: Optional[InstrumentPanel] = None
    alpha_true: Optional[np.ndarray] = None
    Gamma_true: Optional[np.ndarray] = None

    def __post_init__(self):
        n, T = self.panel.n, self.panel.T
        if self.F_true.shape[0] != T:
            raise InvalidInput("factor path rows must match panel periods")
        if self.beta_true.shape != (n, self.F_true.shape[1]):
            raise InvalidInput("loadings shape must match panel and factors")
        if self.sigma2_true.shape != (n,):
            raise InvalidInput("sigma2 length must match panel rows")
        if self.instruments is not None and self.instruments.n != n:
            raise InvalidInput("instrument rows must match panel rows")


def _resolve_rng(config: DgpConfig, rng):
    return np.random.default_rng(config.seed) if rng is None else rng


def draw_fixtures(config: DgpConfig, rng=None) -> DgpFixtures:
    """Draw the cross-sectional quantities of a design once.

    Draw order is fixed (variances, then ARCH coefficients or the
    instrument block, then loadings) so a given generator state always
    produces the same fixtures.
    """
    rng = _resolve_rng(config, rng)
    n, k = config.n, config.k
    sigma2 = rng.uniform(config.sigma2_low, config.sigma2_high, size=n)
    alpha = None
    z = None
    Gamma = None
    if config.dgp == 3:
        alpha = rng.uniform(config.arch_l, config.arch_u, size=n)
    if config.dgp == 4:
        G = rng.standard_normal((config.K, k))
        U, _, _ = np.linalg.svd(G, full_matrices=False)
        Gamma = _fix_signs(U)
        z = rng.standard_normal((n, config.K))
        u = rng.standard_normal((n, k))
        beta = z @ Gamma + u
    else:
        beta = rng.standard_normal((n, k))
        if config.dgp in (2, 3):
            scale = math.sqrt(config.c * config.n ** (-config.kappa))
            beta[:, -1] *= scale
    return DgpFixtures(beta=beta, sigma2=sigma2, alpha=alpha, z=z, Gamma=Gamma)


def draw_factor_path(config: DgpConfig, rng=None) -> np.ndarray:
    """Draw a T x k standard normal factor path.

    Designs 2 and 3 renormalize the path so F'F / T is exactly the
    identity (thin orthonormalization scaled by sqrt(T)).
    """
    rng = _resolve_rng(config, rng)
    if config.T < config.k:
        raise InvalidInput(f"need T >= k, got T={config.T}, k={config.k}")
    F = rng.standard_normal((config.T, config.k))
    if config.dgp in _NORMALIZED_FACTOR_DESIGNS:
        F = _thin_orthonormal(F) * math.sqrt(config.T)
    return F


def _arch_errors(config: DgpConfig, sigma2, alpha, rng) -> np.ndarray:
    """Simulate ARCH(1) errors started at the stationary variance.

    The conditional variance recursion is h_t = c_i + alpha_i * e_{t-1}^2
    with c_i = sigma2_i * (1 - alpha_i), so the unconditional variance is
    sigma2_i. The squared innovation is seeded with sigma2_i times a
    one-degree chi-square and the first burn_in steps are discarded.
    """
    n, T = config.n, config.T
    ci = sigma2 * (1.0 - alpha)
    eps2 = sigma2 * rng.standard_normal(n) ** 2
    total = config.burn_in + T
    g = rng.standard_normal((n, total))
    out = np.empty((n, T))
    for t in range(total):
        h = ci + alpha * eps2
        e = np.sqrt(h) * g[:, t]
        eps2 = e * e
        if t >= config.burn_in:
            out[:, t - config.burn_in] = e
    return out


def generate(config: DgpConfig, rng=None, F_fixed=None,
             fixtures: Optional[DgpFixtures] = None) -> DgpDraw:
    """Generate one panel draw from a design.

    Passing fixtures reuses previously drawn cross-sectional quantities;
    passing F_fixed reuses a factor path. Whatever is not supplied is
    drawn from rng in the order fixtures, factor path, errors.
    """
    rng = _resolve_rng(config, rng)
    if fixtures is None:
        fixtures = draw_fixtures(config, rng)
    if fixtures.beta.shape != (config.n, config.k):
        raise InvalidInput(
            f"fixtures loadings shape {fixtures.beta.shape} does not match "
            f"config (n={config.n}, k={config.k})")
    if config.dgp == 3 and fixtures.alpha is None:
        raise InvalidInput("design 3 fixtures need ARCH coefficients")
    if config.dgp == 4 and fixtures.z is None:
        raise InvalidInput("design 4 fixtures need instruments")

    if F_fixed is None:
        F = draw_factor_path(config, rng)
    else:
        F = np.asarray(F_fixed, dtype=float)
        if F.shape != (config.T, config.k):
            raise InvalidInput(
                f"F_fixed shape {F.shape} does not match (T={config.T}, k={config.k})")
        if not np.all(np.isfinite(F)):
            raise InvalidInput("F_fixed contains non-finite entries")

    if config.dgp == 3:
        eps = _arch_errors(config, fixtures.sigma2, fixtures.alpha, rng)
    else:
        eps = rng.standard_normal((config.n, config.T)) \
            * np.sqrt(fixtures.sigma2)[:, None]
    y = fixtures.beta @ F.T + eps

    instruments = None
    if config.dgp == 4:
        instruments = InstrumentPanel(z=fixtures.z)
    return DgpDraw(panel=PanelData(y=y), F_true=F, beta_true=fixtures.beta,
                   sigma2_true=fixtures.sigma2, instruments=instruments,
                   alpha_true=fixtures.alpha, Gamma_true=fixtures.Gamma)


def psi_moment(h: int, l: float, u: float) -> float:
    """Average of alpha^h / (1 - 3 alpha^2) over alpha uniform on [l, u].

    These are the population values of the ARCH fourth-moment parameters
    scaled by the variance-order coefficient.
    """
    if int(h) != h or h < 0:
        raise InvalidParameter(f"h must be a non-negative integer, got {h}")
    if not 0.0 <= l < u:
        raise InvalidParameter(f"need 0 <= l < u, got l={l}, u={u}")
    if u * u >= 1.0 / 3.0:
        raise InvalidParameter(f"need u^2 < 1/3, got u={u}")
    h = int(h)
    val, _ = quad(lambda a: a ** h / (1.0 - 3.0 * a * a), l, u,
                  epsabs=1e-12, epsrel=1e-12)
    return val / (u - l)
