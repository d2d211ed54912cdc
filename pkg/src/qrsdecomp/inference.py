"""Weighted-bootstrap inference for the full estimation pipeline.

Each replication draws one positive unit-mean weight per observation and
re-runs every stage (propensity, coefficient profile, copula search,
counterfactuals, decomposition) with those weights. Variances come from
the interquartile range of the draws, calibrated to the normal, and
uniform process hypotheses are tested with a sup-statistic whose critical
values are bootstrap quantiles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from . import decomposition
from .counterfactual import CfStat
from .errors import (BootstrapFailureError, ConfigError, DegenerateTestError,
                     DomainError, InsufficientDrawsError, QrsError)
from .pipeline import QrsConfig, fit_both_groups

EXPONENTIAL_UNIT_MEAN = "exponential_unit_mean"
UNIT_WEIGHTS = "unit"  # degenerate test hook: every draw is the point estimate

_NORMAL_IQR = float(ndtri(0.75) - ndtri(0.25))  # about 1.348980
MAX_FAILURE_SHARE = 0.10


@dataclass(frozen=True)
class BootstrapConfig:
    replications: int = 200
    weight_law: str = EXPONENTIAL_UNIT_MEAN
    seed: int = 0
    omega0: float = 1.0  # variance of the weight law

    def __post_init__(self):
        if self.replications < 2:
            raise ConfigError("bootstrap needs at least 2 replications")
        if self.weight_law not in (EXPONENTIAL_UNIT_MEAN, UNIT_WEIGHTS):
            raise ConfigError("unknown weight law %r" % (self.weight_law,))


def stat_id(stat: CfStat) -> str:
    if stat.arg is None:
        return stat.kind
    return "%s@%g" % (stat.kind, stat.arg)


def replication_rng(seed, j) -> np.random.Generator:
    """Independent stream for replication j; order-independent by design."""
    return np.random.default_rng(np.random.SeedSequence([seed, j]))


def draw_weights(n, rng, law=EXPONENTIAL_UNIT_MEAN) -> np.ndarray:
    """iid positive weights with mean one."""
    if n < 1:
        raise DomainError("need at least one weight")
    if law == UNIT_WEIGHTS:
        return np.ones(n)
    return rng.exponential(1.0, size=n)


@dataclass(frozen=True)
class BootstrapDraws:
    """Bootstrap draws of one statistic's components, successful reps only."""

    statistic_id: str
    labels: tuple  # component names plus "total"
    values: np.ndarray  # (n_success, n_labels)


@dataclass(frozen=True)
class BootstrapResult:
    replications: int
    failures: tuple  # (replication index, message) pairs
    point: dict  # statistic id -> DecompResult at unit weights
    draws: dict  # statistic id -> BootstrapDraws


def _decomp_values(fits, ds, stat, weights):
    res = decomposition.run_decomposition(fits, ds, stat, weights)
    labels = ("total", *res.components)
    return res, labels, [res.total, *res.components.values()]


def _one_replication(args):
    ds, cfg_qrs, cfg_boot, stats, j = args
    rng = replication_rng(cfg_boot.seed, j)
    w = draw_weights(ds.n, rng, cfg_boot.weight_law)
    fits = fit_both_groups(ds, cfg_qrs, weights=w)
    out = {}
    for stat in stats:
        _, labels, vals = _decomp_values(fits, ds, stat, w)
        out[stat_id(stat)] = (labels, vals)
    return out


def bootstrap_run(ds, cfg_qrs: QrsConfig, cfg_boot: BootstrapConfig,
                  stats, workers=1, draws_path=None) -> BootstrapResult:
    """Full pipeline bootstrap of the given decomposition statistics.

    One weight vector per replication is shared across both groups and all
    stages. Failed replications are excluded and reported; more than 10
    percent failures aborts the run.
    """
    stats = list(stats)
    fits = fit_both_groups(ds, cfg_qrs)
    point = {}
    label_map = {}
    for stat in stats:
        res, labels, _ = _decomp_values(fits, ds, stat, None)
        point[stat_id(stat)] = res
        label_map[stat_id(stat)] = labels

    J = cfg_boot.replications
    tasks = [(ds, cfg_qrs, cfg_boot, stats, j) for j in range(J)]
    results = {}
    failures = []
    if workers and workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            for j, outcome in zip(range(J), pool.map(_safe_replication, tasks)):
                results[j] = outcome
    else:
        for j, task in enumerate(tasks):
            results[j] = _safe_replication(task)

    rows = {sid: [] for sid in label_map}
    kept = []
    for j in sorted(results):
        outcome = results[j]
        if isinstance(outcome, str):
            failures.append((j, outcome))
            continue
        kept.append(j)
        for sid, (labels, vals) in outcome.items():
            rows[sid].append(vals)

    if len(failures) > MAX_FAILURE_SHARE * J:
        raise BootstrapFailureError(
            "%d of %d bootstrap replications failed: %s"
            % (len(failures), J, failures[0][1]))

    draws = {sid: BootstrapDraws(sid, label_map[sid],
                                 np.asarray(vals, dtype=float))
             for sid, vals in rows.items()}
    if draws_path is not None:
        _write_draws(draws_path, kept, draws)
    return BootstrapResult(replications=J, failures=tuple(failures),
                           point=point, draws=draws)


def _safe_replication(task):
    try:
        return _one_replication(task)
    except QrsError as exc:
        return "%s: %s" % (type(exc).__name__, exc)


def _write_draws(path, kept, draws):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replication", "statistic", "component", "value"])
        for sid in sorted(draws):
            d = draws[sid]
            for row_i, j in enumerate(kept):
                for col, label in enumerate(d.labels):
                    w.writerow([j, sid, label, repr(float(d.values[row_i, col]))])


def iqr_variance(draws) -> float:
    """Squared normalized interquartile range, robust to outlier draws."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 1 or len(draws) < 4:
        raise InsufficientDrawsError(
            "need at least 4 draws for the quartile spread, got %d"
            % draws.size)
    q25, q75 = np.quantile(draws, [0.25, 0.75])
    return float(((q75 - q25) / _NORMAL_IQR) ** 2)


def summarize(result: BootstrapResult) -> dict:
    """Point estimates with bootstrap SEs and significance flags attached."""
    out = {}
    for sid, res in result.point.items():
        d = result.draws[sid]
        se = {}
        for col, label in enumerate(d.labels):
            se[label] = float(np.sqrt(iqr_variance(d.values[:, col])))
        out[sid] = decomposition.with_inference(res, se)
    return out


@dataclass(frozen=True)
class KsResult:
    statistic: float
    critical_values: dict  # confidence level -> bootstrap quantile
    dropped: tuple  # grid indices removed for zero variance
    rejected: dict = field(default_factory=dict)


def ks_test(process_draws, point_process, hypothesis_process, n,
            levels=(0.90, 0.95, 0.99)) -> KsResult:
    """Sup-norm test of a process hypothesis with bootstrap critical values.

    The statistic is sup over the grid of sqrt(n) |point - hypothesis|
    scaled by the per-point bootstrap standard deviation; critical values
    are quantiles of the same sup applied to centered bootstrap draws.
    """
    draws = np.atleast_2d(np.asarray(process_draws, dtype=float))
    point = np.asarray(point_process, dtype=float)
    hypo = np.asarray(hypothesis_process, dtype=float)
    if draws.shape[1] != len(point) or len(point) != len(hypo):
        raise DomainError("process grids are not aligned")
    var = np.array([iqr_variance(draws[:, t]) for t in range(draws.shape[1])])
    keep = var > 0.0
    if not np.any(keep):
        raise DegenerateTestError("all grid points have zero bootstrap variance")
    sd = np.sqrt(var[keep])
    root_n = np.sqrt(float(n))
    statistic = float(np.max(root_n * np.abs(point[keep] - hypo[keep]) / sd))
    sups = np.max(root_n * np.abs(draws[:, keep] - point[keep]) / sd, axis=1)
    crits = {lvl: float(np.quantile(sups, lvl)) for lvl in levels}
    rejected = {lvl: statistic > crits[lvl] for lvl in levels}
    return KsResult(statistic=statistic, critical_values=crits,
                    dropped=tuple(np.nonzero(~keep)[0]), rejected=rejected)
