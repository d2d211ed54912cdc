"""Telescoping decompositions of two-group gaps.

The gap in a statistic between group 1 and group 0 is split by walking a
fixed path of counterfactual anchors, switching one primitive at a time:
covariates (EC, endowments), structural quantile function (CC,
coefficients), copula (SC, selection) and propensity (PC, participation).
Only this path is supported; the anchors are

    (1111) -> (0111) -> (0011) -> (0001) -> (0000)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import counterfactual as cf
from .counterfactual import CfIndex, CfStat
from .errors import DomainError

MAIN_PATH = (CfIndex(1, 1, 1, 1), CfIndex(0, 1, 1, 1), CfIndex(0, 0, 1, 1),
             CfIndex(0, 0, 0, 1), CfIndex(0, 0, 0, 0))
MAIN_COMPONENTS = ("EC", "CC", "SC", "PC")

_STAR_LEVELS = ((2.5758293035489004, "***"), (1.959963984540054, "**"),
                (1.6448536269514722, "*"))


@dataclass(frozen=True)
class DecompResult:
    """One decomposition: anchor values, named components and their sum."""

    statistic: CfStat
    total: float
    components: dict  # ordered name -> value
    counterfactual_values: tuple
    se: dict | None = None  # name -> standard error, plus "total"
    significance: dict | None = None
    notes: tuple = field(default=())


def stars(estimate, se) -> str:
    """Normal-approximation significance flags at 90/95/99 percent."""
    if se is None or not np.isfinite(se) or se <= 0.0:
        return ""
    z = abs(estimate) / se
    for crit, mark in _STAR_LEVELS:
        if z > crit:
            return mark
    return ""


def _telescope(stat, names, values, notes=()):
    comps = {name: values[i] - values[i + 1] for i, name in enumerate(names)}
    total = 0.0
    for name in names:
        total += comps[name]
    return DecompResult(statistic=stat, total=total, components=comps,
                        counterfactual_values=tuple(values), notes=tuple(notes))


def decompose(fits, ds, stat: CfStat, weights=None) -> DecompResult:
    """Four-component split of an outcome gap along the main path."""
    kind = stat.kind
    if kind in (cf.MEAN_PARTICIPANTS, cf.MEAN_POPULATION,
                cf.CDF_PARTICIPANTS, cf.CDF_POPULATION):
        values = [cf.evaluate(fits, ds, idx, stat, weights)
                  for idx in MAIN_PATH]
        return _telescope(stat, MAIN_COMPONENTS, values)
    if kind not in (cf.QUANTILE_PARTICIPANTS, cf.QUANTILE_POPULATION):
        raise DomainError("statistic %r has no four-component decomposition"
                          % (kind,))
    # Quantiles of all anchors are inverted over one shared candidate set so
    # identical step functions give bitwise-identical quantiles.
    target = ("population" if kind == cf.QUANTILE_POPULATION
              else "participants")
    parts = [cf._parts(fits, ds, idx, weights) for idx in MAIN_PATH]
    cand = cf.quantile_candidates(parts, include_zero=target == "population")
    values = [cf.cf_quantile(fits, ds, idx, stat.arg, target, weights,
                             parts=p, candidates=cand)
              for idx, p in zip(MAIN_PATH, parts)]
    notes = ()
    if target == "population" and any(v == 0.0 for v in values):
        notes = ("anchor quantile inside the zero-mass spike",)
    return _telescope(stat, MAIN_COMPONENTS, values, notes)


def decompose_participation(fits, ds, weights=None) -> DecompResult:
    """Mean-propensity gap split into endowments and coefficients."""
    stat = CfStat(cf.MEAN_PROPENSITY)
    anchors = (CfIndex(1, 1, 1, 1), CfIndex(0, 1, 1, 1), CfIndex(0, 0, 0, 0))
    values = [cf.cf_mean_propensity(fits, ds, idx, weights) for idx in anchors]
    return _telescope(stat, ("EC", "CC"), values)


def decompose_selection(fits, ds, weights=None) -> DecompResult:
    """Mean-participant-rank gap split into EC, SC and PC.

    The average rank E[U | S=1] depends on covariates (h), copula (l) and
    propensity (m) only, so the coefficient channel is absent.
    """
    stat = CfStat(cf.MEAN_U)
    anchors = (CfIndex(1, 1, 1, 1), CfIndex(0, 0, 1, 1),
               CfIndex(0, 0, 0, 1), CfIndex(0, 0, 0, 0))
    values = [cf.cf_mean_u(fits, ds, idx, weights) for idx in anchors]
    return _telescope(stat, ("EC", "SC", "PC"), values)


def decompose_potential(fits, ds, stat: CfStat, weights=None) -> DecompResult:
    """Latent-outcome gap split into endowments and coefficients only."""
    if stat.kind not in (cf.POTENTIAL_MEAN, cf.POTENTIAL_CDF,
                         cf.POTENTIAL_QUANTILE):
        raise DomainError("not a potential-outcome statistic: %r"
                          % (stat.kind,))
    values = [cf.potential_stat(fits, ds, 1, 1, stat, weights),
              cf.potential_stat(fits, ds, 0, 1, stat, weights),
              cf.potential_stat(fits, ds, 0, 0, stat, weights)]
    return _telescope(stat, ("EC", "CC"), values)


def run_decomposition(fits, ds, stat: CfStat, weights=None) -> DecompResult:
    """Dispatch on statistic kind to the matching decomposition."""
    if stat.kind == cf.MEAN_PROPENSITY:
        return decompose_participation(fits, ds, weights)
    if stat.kind == cf.MEAN_U:
        return decompose_selection(fits, ds, weights)
    if stat.kind in (cf.POTENTIAL_MEAN, cf.POTENTIAL_CDF,
                     cf.POTENTIAL_QUANTILE):
        return decompose_potential(fits, ds, stat, weights)
    return decompose(fits, ds, stat, weights)


def with_inference(result: DecompResult, se: dict) -> DecompResult:
    """Attach bootstrap standard errors and significance flags."""
    sig = {name: stars(result.components[name], se.get(name))
           for name in result.components}
    sig["total"] = stars(result.total, se.get("total"))
    return DecompResult(
        statistic=result.statistic, total=result.total,
        components=result.components,
        counterfactual_values=result.counterfactual_values,
        se=dict(se), significance=sig, notes=result.notes)
