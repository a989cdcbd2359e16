"""Option payoffs and zero-rate Black-Scholes analytics.

Only what the hedging experiments need: European and lookback calls on a
unit-normalized underlying, plus the Black-Scholes call price and delta
used as policy features and as the classical hedging baseline.  The
risk-free rate is zero throughout, so

    d1 = (ln(S/K) + vol^2 * tau / 2) / (vol * sqrt(tau))
    d2 = d1 - vol * sqrt(tau)
    price = S * N(d1) - K * N(d2)
    delta = N(d1)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

EUROPEAN_CALL = "european_call"
LOOKBACK_CALL = "lookback_call"
_KINDS = (EUROPEAN_CALL, LOOKBACK_CALL)


@dataclass(frozen=True)
class OptionSpec:
    """Contract terms: payoff kind, strike and maturity in trading days."""

    kind: str = EUROPEAN_CALL
    strike: float = 1.0
    maturity_days: int = 20

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown option kind {self.kind!r}; expected one of {_KINDS}")
        if self.strike <= 0.0:
            raise ValueError("strike must be positive")
        if self.maturity_days < 1:
            raise ValueError("maturity_days must be >= 1")

    @property
    def is_lookback(self) -> bool:
        return self.kind == LOOKBACK_CALL


def payoff(spec: OptionSpec, path: np.ndarray) -> float:
    """Terminal payoff of ``spec`` for one price path of length n+1."""
    path = np.asarray(path, dtype=np.float64)
    if path.ndim != 1 or path.shape[0] != spec.maturity_days + 1:
        raise ValueError(
            f"path length {path.shape} does not match maturity {spec.maturity_days} (+1 sample)"
        )
    if spec.is_lookback:
        return max(float(path.max()) - spec.strike, 0.0)
    return max(float(path[-1]) - spec.strike, 0.0)


def payoff_batch(spec: OptionSpec, paths: np.ndarray) -> np.ndarray:
    """Vectorized ``payoff`` over a (n_paths, n+1) matrix."""
    paths = np.asarray(paths, dtype=np.float64)
    if paths.ndim != 2 or paths.shape[1] != spec.maturity_days + 1:
        raise ValueError(
            f"paths shape {paths.shape} does not match maturity {spec.maturity_days} (+1 sample)"
        )
    if spec.is_lookback:
        ref = paths.max(axis=1)
    else:
        ref = paths[:, -1]
    return np.maximum(ref - spec.strike, 0.0)


def _d1(spot, strike, vol, tau_years):
    sq = vol * np.sqrt(tau_years)
    return (np.log(spot / strike) + 0.5 * vol * vol * tau_years) / sq


def bs_price(spot, strike, vol, tau_years):
    """Zero-rate Black-Scholes call price; scalar or array arguments.

    tau_years = 0 collapses to intrinsic value.  spot = 0 is worth 0.
    """
    spot = np.asarray(spot, dtype=np.float64)
    scalar = spot.ndim == 0
    spot = np.atleast_1d(spot)
    out = np.maximum(spot - strike, 0.0)
    if tau_years > 0.0:
        pos = spot > 0.0
        if np.any(pos):
            v = vol[pos] if np.ndim(vol) else vol
            d1 = _d1(spot[pos], strike, v, tau_years)
            d2 = d1 - v * np.sqrt(tau_years)
            out[pos] = spot[pos] * ndtr(d1) - strike * ndtr(d2)
    return float(out[0]) if scalar else out


def bs_delta(spot, strike, vol, tau_years):
    """Zero-rate Black-Scholes call delta N(d1), with intrinsic limits.

    At tau_years = 0 the delta degenerates to the exercise indicator
    (1 in the money, 0 out, 0.5 at the strike).
    """
    spot = np.asarray(spot, dtype=np.float64)
    scalar = spot.ndim == 0
    spot = np.atleast_1d(spot)
    if tau_years <= 0.0:
        out = np.where(spot > strike, 1.0, np.where(spot < strike, 0.0, 0.5))
    else:
        out = np.zeros_like(spot)
        pos = spot > 0.0
        if np.any(pos):
            v = vol[pos] if np.ndim(vol) else vol
            out[pos] = ndtr(_d1(spot[pos], strike, v, tau_years))
    return float(out[0]) if scalar else out
