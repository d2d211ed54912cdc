"""Counterfactual means, CDFs and quantiles under mixed group primitives.

Each statistic is indexed by ell = (h, k, l, m): group h supplies the
covariate distribution, k the structural quantile function, l the copula,
m the propensity. Participant targets integrate the SQF against the
conditional copula increments dG(u, pi); population targets integrate
against dC(u, pi) and carry the non-participant mass at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import copulas
from .data import Dataset
from .errors import ConfigError, DomainError
from .pipeline import QrsFit, predict_propensity

MEAN_PARTICIPANTS = "mean_participants"
MEAN_POPULATION = "mean_population"
CDF_PARTICIPANTS = "cdf_participants"
CDF_POPULATION = "cdf_population"
QUANTILE_PARTICIPANTS = "quantile_participants"
QUANTILE_POPULATION = "quantile_population"
MEAN_PROPENSITY = "mean_propensity"
MEAN_U = "mean_u"
POTENTIAL_MEAN = "potential_mean"
POTENTIAL_CDF = "potential_cdf"
POTENTIAL_QUANTILE = "potential_quantile"

KINDS = (MEAN_PARTICIPANTS, MEAN_POPULATION, CDF_PARTICIPANTS, CDF_POPULATION,
         QUANTILE_PARTICIPANTS, QUANTILE_POPULATION, MEAN_PROPENSITY, MEAN_U,
         POTENTIAL_MEAN, POTENTIAL_CDF, POTENTIAL_QUANTILE)
_ARG_KINDS = (CDF_PARTICIPANTS, CDF_POPULATION, QUANTILE_PARTICIPANTS,
              QUANTILE_POPULATION, POTENTIAL_CDF, POTENTIAL_QUANTILE)


@dataclass(frozen=True)
class CfIndex:
    """Which group supplies each primitive: covariates h, SQF k, copula l,
    propensity m."""

    h: int
    k: int
    l: int
    m: int

    def __post_init__(self):
        for name in ("h", "k", "l", "m"):
            if getattr(self, name) not in (0, 1):
                raise DomainError("CfIndex entries must be 0 or 1")

    def as_tuple(self):
        return (self.h, self.k, self.l, self.m)


@dataclass(frozen=True)
class CfStat:
    """A statistic kind plus its argument (y for CDFs, tau for quantiles)."""

    kind: str
    arg: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError("unknown statistic kind %r" % (self.kind,))
        if (self.arg is not None) != (self.kind in _ARG_KINDS):
            raise DomainError("argument must be present iff the kind needs one"
                              " (kind %r)" % (self.kind,))


def _check_pair(fits):
    fit0, fit1 = fits
    if (fit0.d, fit1.d) != (0, 1):
        raise ConfigError("fits must be ordered (group 0, group 1)")
    if fit0.tau_grid != fit1.tau_grid:
        raise ConfigError("fits carry different quantile grids")
    return fit0, fit1


def _row_weights(ds, mask, weights):
    # Bootstrap weights are renormalized to mean one within the covariate
    # group, so the averages stay level-invariant to the realized weight
    # sum; with unit weights this is exactly 1/n_h.
    n_h = int(np.sum(mask))
    if n_h == 0:
        raise DomainError("covariate group is empty")
    if weights is None:
        return np.full(n_h, 1.0 / n_h)
    w = np.asarray(weights, dtype=float)[mask]
    total = float(np.sum(w))
    if total <= 0.0:
        raise DomainError("covariate group has zero total weight")
    return w / total


def _beta_midpoints(beta):
    return 0.5 * (beta[:-1] + beta[1:])


@dataclass(frozen=True)
class _CfParts:
    """Shared precomputation for one (fits, ds, idx, weights) evaluation."""

    grid: object
    w: np.ndarray  # per-row coefficient, sums to ~1 (n_h,)
    pi: np.ndarray  # propensity of group m's model on group-h rows (n_h,)
    g_mid: np.ndarray  # SQF values at cell midpoints (n_h, n_cells)
    dG: np.ndarray  # conditional-copula cell increments (n_h, n_cells)
    dC: np.ndarray  # copula cell increments (n_h, n_cells)


def _parts(fits, ds: Dataset, idx: CfIndex, weights=None) -> _CfParts:
    fit0, fit1 = _check_pair(fits)
    by = {0: fit0, 1: fit1}
    grid = fit0.tau_grid
    mask = ds.group_mask(idx.h)
    w = _row_weights(ds, mask, weights)
    pi = predict_propensity(by[idx.m], ds, mask)
    spec = by[idx.l].copula
    edges = grid.points
    if spec.is_independence:
        # dG does not reference pi at all, so the result is bit-identical
        # across the propensity index m.
        dG = np.broadcast_to(np.diff(edges)[None, :], (len(pi), len(edges) - 1))
        dC = pi[:, None] * np.diff(edges)[None, :]
    else:
        G = copulas.conditional_given_selection(spec, edges[None, :], pi[:, None])
        dG = np.diff(G, axis=1)
        dC = dG * pi[:, None]
    g_mid = ds.x[mask] @ _beta_midpoints(by[idx.k].beta).T
    return _CfParts(grid=grid, w=w, pi=pi, g_mid=g_mid, dG=dG, dC=dC)


def cf_mean_participants(fits, ds, idx: CfIndex, weights=None) -> float:
    """E[Y^ell | S=1]: SQF integrated against dG, averaged over group-h rows."""
    p = _parts(fits, ds, idx, weights)
    return float(p.w @ np.sum(p.g_mid * p.dG, axis=1))


def cf_mean_population(fits, ds, idx: CfIndex, weights=None) -> float:
    """E[Y^ell] including the zero outcome of non-participants."""
    p = _parts(fits, ds, idx, weights)
    return float(p.w @ np.sum(p.g_mid * p.dC, axis=1))


def cf_cdf_participants(fits, ds, idx, y, weights=None, parts=None) -> float:
    p = _parts(fits, ds, idx, weights) if parts is None else parts
    return float(p.grid.eps * np.sum(p.w)
                 + p.w @ np.sum((p.g_mid <= y) * p.dG, axis=1))


def cf_cdf_population(fits, ds, idx, y, weights=None, parts=None) -> float:
    p = _parts(fits, ds, idx, weights) if parts is None else parts
    mass0 = (1.0 - p.pi) if y >= 0.0 else 0.0
    return float(p.grid.eps * np.sum(p.w)
                 + p.w @ (np.sum((p.g_mid <= y) * p.dC, axis=1) + mass0))


def quantile_candidates(parts_list, include_zero) -> np.ndarray:
    """Sorted union of SQF values over several evaluations.

    The estimated CDFs are step functions jumping only at these values, so
    the left-inverse search can be restricted to them. Sharing one set
    across decomposition anchors makes telescoping exact for quantiles.
    """
    vals = [p.g_mid.ravel() for p in parts_list]
    if include_zero:
        vals.append(np.zeros(1))
    return np.unique(np.concatenate(vals))


def cf_quantile(fits, ds, idx, tau, target, weights=None,
                parts=None, candidates=None) -> float:
    """Left-inverse inf{y : tau <= F(y)} of the chosen counterfactual CDF."""
    if target not in ("participants", "population"):
        raise DomainError("target must be 'participants' or 'population'")
    p = _parts(fits, ds, idx, weights) if parts is None else parts
    eps = p.grid.eps
    if not eps < tau < 1.0 - eps:
        raise DomainError("quantile level %g outside the trimmed interval "
                          "(%g, %g)" % (tau, eps, 1.0 - eps))
    population = target == "population"
    if candidates is None:
        candidates = quantile_candidates([p], include_zero=population)
    cdf = cf_cdf_population if population else cf_cdf_participants
    # The CDF is nondecreasing in y: bisect over the sorted candidates.
    lo, hi = 0, len(candidates) - 1
    if cdf(fits, ds, idx, candidates[lo], parts=p) >= tau:
        return float(candidates[lo])
    if cdf(fits, ds, idx, candidates[hi], parts=p) < tau:
        return float(candidates[hi])  # all mass below 1 - eps trimming
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if cdf(fits, ds, idx, candidates[mid], parts=p) >= tau:
            hi = mid
        else:
            lo = mid
    return float(candidates[hi])


def cf_mean_propensity(fits, ds, idx: CfIndex, weights=None) -> float:
    """Average predicted participation of group m's model over group-h rows."""
    fit0, fit1 = _check_pair(fits)
    mask = ds.group_mask(idx.h)
    w = _row_weights(ds, mask, weights)
    pi = predict_propensity(fit1 if idx.m == 1 else fit0, ds, mask)
    return float(w @ pi)


def cf_mean_u(fits, ds, idx: CfIndex, weights=None) -> float:
    """Average rank E[U^ell | S=1] of participants: midpoints against dG."""
    p = _parts(fits, ds, idx, weights)
    return float(p.w @ (p.dG @ p.grid.midpoints))


def potential_stat(fits, ds, h, k, stat: CfStat, weights=None) -> float:
    """Latent-outcome statistics with uniform dtau weights (no selection)."""
    fit0, fit1 = _check_pair(fits)
    by = {0: fit0, 1: fit1}
    grid = fit0.tau_grid
    mask = ds.group_mask(h)
    w = _row_weights(ds, mask, weights)
    g_mid = ds.x[mask] @ _beta_midpoints(by[k].beta).T
    du = np.diff(grid.points)
    if stat.kind == POTENTIAL_MEAN:
        return float(w @ (g_mid @ du))
    if stat.kind == POTENTIAL_CDF:
        return float(grid.eps * np.sum(w) + w @ ((g_mid <= stat.arg) @ du))
    if stat.kind != POTENTIAL_QUANTILE:
        raise DomainError("not a potential-outcome statistic: %r" % (stat.kind,))
    tau = stat.arg
    if not grid.eps < tau < 1.0 - grid.eps:
        raise DomainError("quantile level outside the trimmed interval")
    # Step-function left inverse: sort the point masses w_i * du_j carried
    # by each SQF value and scan the cumulative distribution.
    vals = g_mid.ravel()
    masses = (w[:, None] * du[None, :]).ravel()
    order = np.argsort(vals, kind="stable")
    cum = grid.eps * np.sum(w) + np.cumsum(masses[order])
    hit = int(np.searchsorted(cum, tau, side="left"))
    if hit >= len(vals):
        return float(vals[order[-1]])
    return float(vals[order[hit]])


def evaluate(fits, ds, idx: CfIndex, stat: CfStat, weights=None) -> float:
    """Dispatch a single (index, statistic) request."""
    kind = stat.kind
    if kind == MEAN_PARTICIPANTS:
        return cf_mean_participants(fits, ds, idx, weights)
    if kind == MEAN_POPULATION:
        return cf_mean_population(fits, ds, idx, weights)
    if kind == CDF_PARTICIPANTS:
        return cf_cdf_participants(fits, ds, idx, stat.arg, weights)
    if kind == CDF_POPULATION:
        return cf_cdf_population(fits, ds, idx, stat.arg, weights)
    if kind == QUANTILE_PARTICIPANTS:
        return cf_quantile(fits, ds, idx, stat.arg, "participants", weights)
    if kind == QUANTILE_POPULATION:
        return cf_quantile(fits, ds, idx, stat.arg, "population", weights)
    if kind == MEAN_PROPENSITY:
        return cf_mean_propensity(fits, ds, idx, weights)
    if kind == MEAN_U:
        return cf_mean_u(fits, ds, idx, weights)
    return potential_stat(fits, ds, idx.h, idx.k, stat, weights)
