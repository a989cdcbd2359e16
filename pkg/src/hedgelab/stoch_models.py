"""Classical underlying-asset simulators: per-step GBM and Heston via QE-M.

GBM uses the arithmetic difference step

    S_{i+1} = S_i * (1 + mu*dt + sigma*sqrt(dt)*eps_i),

with annualized (mu, sigma) and dt in years (1/250 by default); the rare
path touching a nonpositive price is regenerated and counted.

The Heston variance follows the quadratic-exponential scheme: given the
conditional mean m and variance s2 of V_{t+dt} | V_t, the regime switch
on psi = s2/m^2 picks either the moment-matched quadratic V' = a(b+Z)^2
(psi <= 1.5) or the exponential-tail inverse CDF.  The log-price update
uses the martingale-corrected drift K0* so E[S_{t+dt} | S_t, V_t] = S_t
exactly at zero rates; correlation enters through the usual K1..K4
decomposition with central weighting (gamma1 = gamma2 = 1/2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

PSI_SWITCH = 1.5
_GAMMA1 = 0.5
_GAMMA2 = 0.5


@dataclass(frozen=True)
class GbmParams:
    mu: float = 0.0
    sigma: float = 0.2
    dt: float = 1.0 / 250.0
    n_steps: int = 20

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")


@dataclass(frozen=True)
class HestonParams:
    """CIR variance parameters; initial vol convention sqrt(theta) = sqrt(v0)."""

    kappa: float = 1.0
    theta: float = 0.04
    v0: float = 0.04
    vol_of_vol: float = 0.2
    rho: float = -0.7
    dt: float = 1.0 / 250.0
    n_steps: int = 20

    def __post_init__(self):
        if self.kappa < 0.0:
            raise ValueError("kappa must be nonnegative")
        if self.theta <= 0.0 or self.v0 <= 0.0:
            raise ValueError("theta and v0 must be positive")
        if self.vol_of_vol <= 0.0:
            raise ValueError("vol_of_vol must be positive")
        if abs(self.rho) > 1.0:
            raise ValueError("rho must lie in [-1, 1]")
        if self.dt <= 0.0 or self.n_steps < 1:
            raise ValueError("dt must be positive and n_steps >= 1")

    @classmethod
    def from_initial_vol(cls, sigma_init: float, kappa: float, rho: float,
                         vol_of_vol: float = 0.2, dt: float = 1.0 / 250.0,
                         n_steps: int = 20) -> "HestonParams":
        """Tuning-grid convention: one knob sets sqrt(theta) = sqrt(v0)."""
        return cls(kappa=kappa, theta=sigma_init ** 2, v0=sigma_init ** 2,
                   vol_of_vol=vol_of_vol, rho=rho, dt=dt, n_steps=n_steps)


def gbm_paths(params: GbmParams, n_paths: int, seed: int,
              return_regen_count: bool = False):
    """Simulate ``n_paths`` GBM paths of shape (n_paths, n_steps+1), S_0 = 1.

    (params, seed) fully determine the output.  Paths touching a price
    <= 0 are redrawn; set ``return_regen_count`` to also get how many.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    rng = np.random.default_rng(seed)
    drift = 1.0 + params.mu * params.dt
    scale = params.sigma * np.sqrt(params.dt)
    regenerated = 0
    factors = drift + scale * rng.standard_normal((n_paths, params.n_steps))
    bad = (factors <= 0.0).any(axis=1)
    while bad.any():
        regenerated += int(bad.sum())
        factors[bad] = drift + scale * rng.standard_normal((int(bad.sum()), params.n_steps))
        bad = (factors <= 0.0).any(axis=1)
    paths = np.empty((n_paths, params.n_steps + 1))
    paths[:, 0] = 1.0
    np.cumprod(factors, axis=1, out=paths[:, 1:])
    if return_regen_count:
        return paths, regenerated
    return paths


def _qe_variance_step(v: np.ndarray, m: np.ndarray, s2: np.ndarray,
                      u: np.ndarray) -> np.ndarray:
    """One QE update of the variance given uniforms ``u``; vectorized."""
    out = np.zeros_like(v)
    alive = m > 0.0  # absorbed-at-zero paths (kappa = 0, V = 0) stay put
    psi = np.ones_like(v)
    np.divide(s2, m * m, out=psi, where=alive)

    quad = alive & (psi <= PSI_SWITCH)
    if quad.any():
        inv_psi = 1.0 / psi[quad]
        b2 = 2.0 * inv_psi - 1.0 + np.sqrt(2.0 * inv_psi) * np.sqrt(2.0 * inv_psi - 1.0)
        a = m[quad] / (1.0 + b2)
        z = ndtri(u[quad])
        out[quad] = a * (np.sqrt(b2) + z) ** 2

    expo = alive & (psi > PSI_SWITCH)
    if expo.any():
        p = (psi[expo] - 1.0) / (psi[expo] + 1.0)
        beta = (1.0 - p) / m[expo]
        uu = u[expo]
        draw = np.zeros_like(uu)
        tail = uu > p
        draw[tail] = np.log((1.0 - p[tail]) / (1.0 - uu[tail])) / beta[tail]
        out[expo] = draw
    return out


def _qe_exp_moment(a_coef: float, m: np.ndarray, s2: np.ndarray,
                   v_next_mask_src: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """E[exp(a_coef * V')] per path for the branch each path used.

    Returns (moment, valid); invalid entries (outside the branch's domain,
    which the tuning grids never reach) signal a fallback to the
    uncorrected drift.
    """
    moment = np.ones_like(m)
    valid = np.ones(m.shape, dtype=bool)
    alive = m > 0.0
    psi = np.ones_like(m)
    np.divide(s2, m * m, out=psi, where=alive)

    quad = alive & (psi <= PSI_SWITCH)
    if quad.any():
        inv_psi = 1.0 / psi[quad]
        b2 = 2.0 * inv_psi - 1.0 + np.sqrt(2.0 * inv_psi) * np.sqrt(2.0 * inv_psi - 1.0)
        a = m[quad] / (1.0 + b2)
        denom = 1.0 - 2.0 * a_coef * a
        ok = denom > 0.0
        mom = np.ones_like(a)
        mom[ok] = np.exp(a_coef * a[ok] * b2[ok] / denom[ok]) / np.sqrt(denom[ok])
        moment[quad] = mom
        v = valid[quad]
        v &= ok
        valid[quad] = v

    expo = alive & (psi > PSI_SWITCH)
    if expo.any():
        p = (psi[expo] - 1.0) / (psi[expo] + 1.0)
        beta = (1.0 - p) / m[expo]
        ok = beta > a_coef
        mom = np.ones_like(p)
        mom[ok] = p[ok] + beta[ok] * (1.0 - p[ok]) / (beta[ok] - a_coef)
        moment[expo] = mom
        v = valid[expo]
        v &= ok
        valid[expo] = v
    return moment, valid


def heston_paths(params: HestonParams, n_paths: int, seed: int,
                 return_variance: bool = False):
    """Simulate Heston price paths (n_paths, n_steps+1) with the QE-M scheme.

    S_0 = 1; the variance stays nonnegative by construction.  With
    ``return_variance`` the (n_paths, n_steps+1) variance paths come too.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    rng = np.random.default_rng(seed)
    kappa, theta, sv, rho, dt = (params.kappa, params.theta, params.vol_of_vol,
                                 params.rho, params.dt)

    if kappa > 0.0:
        ekd = np.exp(-kappa * dt)
        c1 = sv * sv * ekd * (1.0 - ekd) / kappa
        c2 = theta * sv * sv * (1.0 - ekd) ** 2 / (2.0 * kappa)
    else:
        ekd = 1.0
        c1 = sv * sv * dt  # kappa -> 0 limit of the conditional variance
        c2 = 0.0

    k1 = _GAMMA1 * dt * (kappa * rho / sv - 0.5) - rho / sv
    k2 = _GAMMA2 * dt * (kappa * rho / sv - 0.5) + rho / sv
    k3 = _GAMMA1 * dt * (1.0 - rho * rho)
    k4 = _GAMMA2 * dt * (1.0 - rho * rho)
    a_coef = k2 + 0.5 * k4

    log_s = np.zeros(n_paths)
    v = np.full(n_paths, params.v0)
    prices = np.empty((n_paths, params.n_steps + 1))
    prices[:, 0] = 1.0
    variances = None
    if return_variance:
        variances = np.empty((n_paths, params.n_steps + 1))
        variances[:, 0] = params.v0

    for step in range(params.n_steps):
        m = theta + (v - theta) * ekd
        s2 = v * c1 + c2
        u = rng.random(n_paths)
        z = rng.standard_normal(n_paths)
        v_next = _qe_variance_step(v, m, s2, u)

        moment, valid = _qe_exp_moment(a_coef, m, s2, v_next)
        k0_star = -np.log(moment) - (k1 + 0.5 * k3) * v
        # outside the moment's domain fall back to the uncorrected drift
        if not valid.all():
            k0_plain = -rho * kappa * theta * dt / sv
            k0_star = np.where(valid, k0_star, k0_plain)

        log_s = log_s + k0_star + k1 * v + k2 * v_next + np.sqrt(k3 * v + k4 * v_next) * z
        v = v_next
        prices[:, step + 1] = np.exp(log_s)
        if return_variance:
            variances[:, step + 1] = v

    if return_variance:
        return prices, variances
    return prices
