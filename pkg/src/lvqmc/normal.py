"""Standard normal CDF, density, interval masses and quantile.

The CDF goes through ``erfc`` on the tail side so tail masses keep full
relative precision. ``scipy.special.ndtri`` supplies the quantile that the
inverse-CDF fit is measured against.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = ["norm_cdf", "norm_sf", "norm_pdf", "norm_ppf", "interval_mass"]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(x):
    """Phi(x), accurate to double precision in both tails."""
    if np.isscalar(x):
        return 0.5 * math.erfc(-x / _SQRT2)
    return ndtr(np.asarray(x, dtype=float))


def norm_sf(x):
    """1 - Phi(x) without cancellation."""
    if np.isscalar(x):
        return 0.5 * math.erfc(x / _SQRT2)
    return ndtr(-np.asarray(x, dtype=float))


def norm_pdf(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


def norm_ppf(u):
    """Phi^{-1}(u)."""
    return ndtri(u)


def interval_mass(lo: float, hi: float) -> float:
    """Standard normal probability of ``[lo, hi]``, taken on the tail side."""
    if hi <= lo:
        return 0.0
    if lo >= 0.0:
        return norm_sf(lo) - norm_sf(hi)
    return norm_cdf(hi) - norm_cdf(lo)
