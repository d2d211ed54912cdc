"""Parametric copulas of the latent pair (U, V).

U is the outcome unobservable (ability), V the participation unobservable.
``conditional_given_selection`` gives the law of U among participants at
participation threshold v. A negative dependence parameter means negative
(U, V) correlation, i.e. positive selection into participation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr, ndtri

from ._bvn import bvn_cdf
from .errors import DomainError

INDEPENDENCE = "independence"
FRANK = "frank"
GAUSSIAN = "gaussian"
FAMILIES = (INDEPENDENCE, FRANK, GAUSSIAN)

GAUSSIAN_RHO_CAP = 0.995
FRANK_THETA_CAP = 50.0
_FRANK_INDEP_EPS = 1e-6


@dataclass(frozen=True)
class CopulaSpec:
    """Copula family plus scalar dependence parameter."""

    family: str
    theta: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError("unknown copula family %r" % (self.family,))
        if self.family == GAUSSIAN and not abs(self.theta) < GAUSSIAN_RHO_CAP:
            raise DomainError("Gaussian rho must satisfy |rho| < %g" % GAUSSIAN_RHO_CAP)
        if self.family == FRANK and not abs(self.theta) <= FRANK_THETA_CAP:
            raise DomainError("Frank theta must satisfy |theta| <= %g" % FRANK_THETA_CAP)

    @property
    def is_independence(self):
        return (self.family == INDEPENDENCE
                or (self.family == FRANK and abs(self.theta) < _FRANK_INDEP_EPS)
                or (self.family == GAUSSIAN and self.theta == 0.0))


def _frank_denom(th, u, v):
    """(1-e^{-th}) - (1-e^{-th*u})(1-e^{-th*v}) without cancellation."""
    return (np.exp(-th * u) + np.exp(-th * v)
            - np.exp(-th * (u + v)) - np.exp(-th))


def _check_unit(name, a, lo=0.0, hi=1.0, open_lo=False, open_hi=False):
    a = np.asarray(a, dtype=float)
    bad = (a < lo) | (a > hi)
    if open_lo:
        bad |= a == lo
    if open_hi:
        bad |= a == hi
    if np.any(bad | ~np.isfinite(a)):
        raise DomainError("%s out of range [%g, %g]" % (name, lo, hi))
    return a


def cdf(spec: CopulaSpec, u, v):
    """C(u, v) = P(U <= u, V <= v)."""
    u = _check_unit("u", u)
    v = _check_unit("v", v)
    if spec.is_independence:
        return u * v
    if spec.family == FRANK:
        # C = -ln(D / (1 - e^{-th})) / th with the cancellation-free form
        # D = e^{-th*u} + e^{-th*v} - e^{-th*(u+v)} - e^{-th}.
        th = spec.theta
        d = _frank_denom(th, u, v)
        return -np.log(d / -np.expm1(-th)) / th
    # Gaussian: clamp the boundary before the normal quantile transform.
    uc = np.clip(u, 1e-300, 1.0 - 1e-16)
    vc = np.clip(v, 1e-300, 1.0 - 1e-16)
    out = bvn_cdf(ndtri(uc), ndtri(vc), spec.theta)
    out = np.where((u == 0.0) | (v == 0.0), 0.0, out)
    out = np.where(u == 1.0, v, np.where(v == 1.0, u, out))
    return out[()] if out.ndim == 0 else out


def conditional_given_selection(spec: CopulaSpec, u, v):
    """G(u, v) = C(u, v) / v = P(U <= u | V <= v): ability CDF of participants."""
    u = _check_unit("u", u)
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0.0) or np.any(v > 1.0):
        raise DomainError("v must lie in (0, 1]")
    if spec.is_independence:
        return u * np.ones_like(v) if np.shape(v) else u
    # C(u, 1) = u is an exact identity; bypass rounding in the closed form
    # so full selection reduces to the identity bitwise.
    out = cdf(spec, u, v) / v
    return np.where(v == 1.0, u * np.ones_like(out), out)[()]


def density(spec: CopulaSpec, u, v):
    """Copula density c(u, v) on the open unit square."""
    u = _check_unit("u", u, open_lo=True, open_hi=True)
    v = _check_unit("v", v, open_lo=True, open_hi=True)
    if spec.is_independence:
        return np.ones(np.broadcast_shapes(np.shape(u), np.shape(v)))[()] * 1.0
    if spec.family == FRANK:
        th = spec.theta
        d = _frank_denom(th, u, v)
        return -th * np.expm1(-th) * np.exp(-th * (u + v)) / d**2
    rho = spec.theta
    a = ndtri(u)
    b = ndtri(v)
    r2 = 1.0 - rho * rho
    return np.exp(-(rho * rho * (a * a + b * b) - 2.0 * rho * a * b)
                  / (2.0 * r2)) / np.sqrt(r2)


def conditional_u_given_v(spec: CopulaSpec, u, v):
    """P(U <= u | V = v) = dC/dv; used for exact copula sampling."""
    u = _check_unit("u", u)
    v = _check_unit("v", v, open_lo=True, open_hi=True)
    if spec.is_independence:
        return u * np.ones_like(np.asarray(v, dtype=float))[()] if np.shape(v) else u
    if spec.family == FRANK:
        th = spec.theta
        return ((np.exp(-th * v) - np.exp(-th * (u + v)))
                / _frank_denom(th, u, v))
    rho = spec.theta
    uc = np.clip(u, 1e-300, 1.0 - 1e-16)
    return ndtr((ndtri(uc) - rho * ndtri(v)) / np.sqrt(1.0 - rho * rho))


def conditional_u_given_v_inverse(spec: CopulaSpec, p, v):
    """Solve P(U <= u | V = v) = p for u (closed form for all families)."""
    p = _check_unit("p", p, open_lo=True, open_hi=True)
    v = _check_unit("v", v, open_lo=True, open_hi=True)
    if spec.is_independence:
        return p * np.ones_like(np.asarray(v, dtype=float))[()] if np.shape(v) else p
    if spec.family == FRANK:
        th = spec.theta
        ev = np.exp(-th * v)
        return -(np.log(ev * (1.0 - p) + p * np.exp(-th))
                 - np.log(ev * (1.0 - p) + p)) / th
    rho = spec.theta
    return ndtr(rho * ndtri(v) + np.sqrt(1.0 - rho * rho) * ndtri(p))


def sample(spec: CopulaSpec, n, rng):
    """Draw n iid (U, V) pairs with exact uniform marginals."""
    v = rng.uniform(size=n)
    p = rng.uniform(size=n)
    u = conditional_u_given_v_inverse(spec, p, v)
    return u, v


def _debye1(theta):
    val, _ = quad(lambda t: t / np.expm1(t), 0.0, theta, epsabs=1e-10, epsrel=1e-10)
    return val / theta


def kendall_tau(spec: CopulaSpec) -> float:
    """Kendall rank correlation implied by the copula."""
    if spec.is_independence:
        return 0.0
    if spec.family == GAUSSIAN:
        return float(2.0 * np.arcsin(spec.theta) / np.pi)
    th = spec.theta
    return float(1.0 + 4.0 * (_debye1(th) - 1.0) / th)
