"""Bivariate standard-normal CDF by Gauss-Legendre quadrature.

Vectorized port of Genz's bvnu algorithm (Drezner & Wesolowsky integrand,
with the tetrachoric expansion branch for |rho| > 0.925). Absolute accuracy
is better than 5e-16 for |rho| < 0.925 and ~1e-14 up to |rho| = 0.995.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr, roots_legendre

_TWO_PI = 2.0 * np.pi


def _quad_nodes(r):
    if abs(r) < 0.3:
        n = 6
    elif abs(r) < 0.75:
        n = 12
    else:
        n = 20
    x, w = roots_legendre(n)
    return 1.0 + x, w


def bvn_upper(h, k, r):
    """P(X > h, Y > k) for standard bivariate normal with correlation r.

    ``h`` and ``k`` broadcast; ``r`` is a scalar in (-1, 1).
    """
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    h, k = np.broadcast_arrays(h, k)
    r = float(r)
    if abs(r) >= 1.0:
        raise ValueError("correlation must satisfy |r| < 1")
    if r == 0.0:
        return ndtr(-h) * ndtr(-k)

    x, w = _quad_nodes(r)

    if abs(r) < 0.925:
        hk = h * k
        hs = 0.5 * (h * h + k * k)
        asr = 0.5 * np.arcsin(r)
        sn = np.sin(asr * x)  # (nq,)
        integrand = np.exp(
            (sn * hk[..., None] - hs[..., None]) / (1.0 - sn**2))
        bvn = integrand @ w
        bvn = bvn * asr / _TWO_PI + ndtr(-h) * ndtr(-k)
        return np.clip(bvn, 0.0, 1.0)

    # |r| >= 0.925: expansion around r = +/-1 (Genz 2004).
    h = h.copy()
    k = k.copy()
    if r < 0.0:
        k = -k
    hk = h * k
    bvn = np.zeros_like(h)
    a2 = 1.0 - r * r
    a = np.sqrt(a2)
    bs = (h - k) ** 2
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 80.0
    asr = -0.5 * (bs / a2 + hk)
    m = asr > -100.0
    bvn = np.where(
        m,
        a * np.exp(np.where(m, asr, 0.0))
        * (1.0 - c * (bs - a2) * (1.0 - d * bs) / 3.0 + c * d * a2 * a2),
        bvn,
    )
    m = hk > -100.0
    b = np.sqrt(bs)
    sp = np.sqrt(_TWO_PI) * ndtr(-b / a)
    bvn = bvn - np.where(
        m,
        np.exp(np.where(m, -0.5 * hk, 0.0)) * sp * b
        * (1.0 - c * bs * (1.0 - d * bs) / 3.0),
        0.0,
    )
    a_half = 0.5 * a
    xs = (a_half * x) ** 2  # (nq,)
    asr = -0.5 * (bs[..., None] / xs + hk[..., None])
    keep = asr > -100.0
    sp = 1.0 + c[..., None] * xs * (1.0 + 5.0 * d[..., None] * xs)
    rs = np.sqrt(1.0 - xs)
    ep = np.exp(-0.5 * hk[..., None] * xs / (1.0 + rs) ** 2) / rs
    integrand = np.where(keep, np.exp(np.where(keep, asr, 0.0)) * (sp - ep), 0.0)
    bvn = (a_half * (integrand @ w) - bvn) / _TWO_PI

    if r > 0.0:
        bvn = bvn + ndtr(-np.maximum(h, k))
    else:
        lower = np.where(h < 0.0, ndtr(k) - ndtr(h), ndtr(-h) - ndtr(-k))
        bvn = np.where(h >= k, -bvn, lower - bvn)
    return np.clip(bvn, 0.0, 1.0)


def bvn_cdf(h, k, r):
    """P(X <= h, Y <= k) for standard bivariate normal with correlation r."""
    return bvn_upper(-np.asarray(h, dtype=float), -np.asarray(k, dtype=float), r)
