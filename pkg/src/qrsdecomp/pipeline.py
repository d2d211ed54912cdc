"""Per-group estimation pipeline.

Five steps per group d: (1) propensity MLE, (2) rotated-QR coefficient
profile at a trial copula parameter t, (3) copula-parameter search
minimizing the integrated moment criterion, (4) final coefficients at the
minimizer, (5) assembled fit bundle (propensity, copula, quantile
coefficient process).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import copulas, propensity, rotated_qr
from .copulas import CopulaSpec
from .data import Dataset
from .errors import ConfigError, DomainError

INSTRUMENT_PROPENSITY = "propensity"
INSTRUMENT_MW2019 = "mw2019"  # sqrt(u(1-u)) * propensity weighting

WEAK_ID_RANGE = 1e-10
WEAK_ID_CURVATURE = 1e-8

# Default Frank search grid endpoint; spans essentially the full
# Kendall-tau range while staying inside the numerical cap.
FRANK_SEARCH_BOUND = 42.889
GAUSSIAN_SEARCH_BOUND = 0.99


@dataclass(frozen=True)
class TauGrid:
    """Evenly spaced quantile levels on the trimmed interval [eps, 1-eps]."""

    eps: float = 0.01
    step: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.eps < 0.5:
            raise ConfigError("trimming eps must lie in (0, 0.5)")
        if not 0.0 < self.step <= 1.0 - 2.0 * self.eps:
            raise ConfigError("grid step too large for the trimmed interval")

    @property
    def points(self) -> np.ndarray:
        n_cells = int(round((1.0 - 2.0 * self.eps) / self.step))
        return np.linspace(self.eps, 1.0 - self.eps, n_cells + 1)

    @property
    def midpoints(self) -> np.ndarray:
        p = self.points
        return 0.5 * (p[:-1] + p[1:])


@dataclass(frozen=True)
class ThetaSearch:
    lo: float
    hi: float
    coarse_points: int = 41
    refine_tol: float = 1e-3


def default_theta_search(family) -> ThetaSearch:
    if family == copulas.FRANK:
        return ThetaSearch(-FRANK_SEARCH_BOUND, FRANK_SEARCH_BOUND)
    if family == copulas.GAUSSIAN:
        return ThetaSearch(-GAUSSIAN_SEARCH_BOUND, GAUSSIAN_SEARCH_BOUND)
    return ThetaSearch(0.0, 0.0, coarse_points=1)


@dataclass(frozen=True)
class QrsConfig:
    """Everything fit_group needs beyond the data."""

    tau_grid: TauGrid = field(default_factory=TauGrid)
    copula_family: str = copulas.FRANK
    theta_search: ThetaSearch | None = None
    instrument_fn: str = INSTRUMENT_PROPENSITY
    link: str = propensity.PROBIT
    interactions: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.copula_family not in copulas.FAMILIES:
            raise ConfigError("unknown copula family %r" % (self.copula_family,))
        if self.instrument_fn not in (INSTRUMENT_PROPENSITY, INSTRUMENT_MW2019):
            raise ConfigError("unknown instrument_fn %r" % (self.instrument_fn,))
        if self.theta_search is None:
            object.__setattr__(self, "theta_search",
                               default_theta_search(self.copula_family))
        ts = self.theta_search
        # Search bounds must respect the copula parameter caps.
        CopulaSpec(self.copula_family, ts.lo)
        CopulaSpec(self.copula_family, ts.hi)


@dataclass(frozen=True)
class QrsFit:
    """Estimate bundle for one group."""

    d: int
    model: propensity.PropensityModel | None  # None: group is all-participants
    copula: CopulaSpec
    tau_grid: TauGrid
    beta: np.ndarray  # (len(points), k)
    pi_hat: np.ndarray  # predicted propensity, all group-d rows in ds order
    criterion_value: float
    criterion_trace: tuple  # ((t, criterion), ...) over the search path
    warnings: tuple
    instrument_fn: str
    interactions: tuple = ()

    def sqf(self, x, tau_index=None):
        """g(x, tau_j) = x' beta(tau_j) for rows x; (n, J) matrix."""
        beta = self.beta if tau_index is None else self.beta[tau_index]
        return np.asarray(x) @ beta.T


def predict_propensity(fit: QrsFit, ds: Dataset, mask=None) -> np.ndarray:
    """pi_m(z) on arbitrary rows; exactly 1 for an all-participants group."""
    n = ds.n if mask is None else int(np.sum(mask))
    if fit.model is None:
        return np.ones(n)
    return propensity.predict_dataset(fit.model, ds, mask, fit.interactions)


def conditional_levels(spec: CopulaSpec, taus, pis) -> np.ndarray:
    """G(tau_j, pi_i; t) as an (n, J) matrix."""
    taus = np.asarray(taus, dtype=float)
    pis = np.asarray(pis, dtype=float)
    return copulas.conditional_given_selection(spec, taus[None, :], pis[:, None])


def profile_beta(ds: Dataset, d, model, t: CopulaSpec, grid: TauGrid,
                 weights=None, interactions=()) -> np.ndarray:
    """Rotated-QR coefficients for every grid level at trial copula t."""
    part = ds.group_mask(d) & (ds.s == 1)
    n_part = int(np.sum(part))
    if n_part <= ds.k:
        raise DomainError("group %r has %d participants but %d coefficients"
                          % (d, n_part, ds.k))
    if model is None:
        pis = np.ones(n_part)
    else:
        pis = propensity.predict_dataset(model, ds, part, interactions)
    X = ds.x[part]
    y = ds.y[part]
    w = None if weights is None else np.asarray(weights, dtype=float)[part]
    taus = grid.points
    levels = np.clip(conditional_levels(t, taus, pis),
                     rotated_qr.LEVEL_CLAMP, 1.0 - rotated_qr.LEVEL_CLAMP)
    beta = np.empty((len(taus), ds.k))
    for j in range(len(taus)):
        beta[j] = rotated_qr.solve(rotated_qr.QrProblem(X, y, levels[:, j], w))
    return beta


def _instrument(kind, taus, pis):
    # (n, J) instrument values phi(tau_j, z_i).
    if kind == INSTRUMENT_PROPENSITY:
        return np.broadcast_to(pis[:, None], (len(pis), len(taus)))
    root = np.sqrt(taus * (1.0 - taus))
    return pis[:, None] * root[None, :]


def copula_criterion(ds: Dataset, d, model, t: CopulaSpec, grid: TauGrid,
                     instrument_fn=INSTRUMENT_PROPENSITY, weights=None,
                     interactions=(), beta=None) -> float:
    """Norm of the integrated quantile-coverage moment at trial copula t.

    At the true parameters 1(y <= x'beta(tau)) has conditional mean
    G(tau, pi(z)); the criterion aggregates the deviation over the grid.
    """
    if beta is None:
        beta = profile_beta(ds, d, model, t, grid, weights, interactions)
    part = ds.group_mask(d) & (ds.s == 1)
    if model is None:
        pis = np.ones(int(np.sum(part)))
    else:
        pis = propensity.predict_dataset(model, ds, part, interactions)
    X = ds.x[part]
    y = ds.y[part]
    w = (np.ones(len(y)) if weights is None
         else np.asarray(weights, dtype=float)[part])
    taus = grid.points
    fitted = X @ beta.T  # (n, J)
    indic = (y[:, None] <= fitted).astype(float)
    G = conditional_levels(t, taus, pis)
    phi = _instrument(instrument_fn, taus, pis)
    m = grid.step * float(np.sum(w[:, None] * phi * (indic - G)))
    return float(np.abs(m))


def _golden_refine(f, lo, hi, tol):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def fit_group(ds: Dataset, d, cfg: QrsConfig, weights=None) -> QrsFit:
    """Run the full estimator for group ``d``. Deterministic given inputs."""
    group = ds.group_mask(d)
    if not np.any(group):
        raise DomainError("group %r is empty" % (d,))
    all_participants = bool(np.all(ds.s[group] == 1))
    if all_participants:
        model = None
    else:
        model = propensity.fit_propensity(ds, d, cfg.link, weights,
                                          cfg.interactions or None)

    warnings = []
    trace = []
    grid = cfg.tau_grid
    family = cfg.copula_family

    def criterion_at(t_val):
        spec = CopulaSpec(family, t_val)
        val = copula_criterion(ds, d, model, spec, grid, cfg.instrument_fn,
                               weights, cfg.interactions)
        trace.append((float(t_val), val))
        return val

    if family == copulas.INDEPENDENCE:
        theta_hat = 0.0
        crit = criterion_at(0.0)
    else:
        ts = cfg.theta_search
        coarse = np.linspace(ts.lo, ts.hi, ts.coarse_points)
        values = np.array([criterion_at(t) for t in coarse])
        rng_span = float(values.max() - values.min())
        i_best = int(np.argmin(values))
        if rng_span < WEAK_ID_RANGE:
            warnings.append(
                "weak identification: criterion range %.3g over the search grid"
                % rng_span)
            theta_hat, crit = float(coarse[i_best]), float(values[i_best])
        else:
            lo = coarse[max(i_best - 1, 0)]
            hi = coarse[min(i_best + 1, len(coarse) - 1)]
            theta_hat, crit = _golden_refine(criterion_at, lo, hi, ts.refine_tol)
            if len(coarse) >= 3:
                ib = min(max(i_best, 1), len(coarse) - 2)
                h = coarse[1] - coarse[0]
                curv = (values[ib - 1] - 2 * values[ib] + values[ib + 1]) / h**2
                if curv < WEAK_ID_CURVATURE:
                    warnings.append(
                        "weak identification: criterion curvature %.3g at the minimum"
                        % curv)

    spec_hat = CopulaSpec(family, theta_hat)
    if all_participants:
        warnings.append("all observations participate: copula parameter is "
                        "not identified; coefficients equal plain quantile "
                        "regression")
    beta = profile_beta(ds, d, model, spec_hat, grid, weights, cfg.interactions)
    pi_hat = (np.ones(int(np.sum(group))) if model is None
              else propensity.predict_dataset(model, ds, group, cfg.interactions))
    return QrsFit(
        d=int(d), model=model, copula=spec_hat, tau_grid=grid, beta=beta,
        pi_hat=pi_hat, criterion_value=float(crit),
        criterion_trace=tuple(trace), warnings=tuple(warnings),
        instrument_fn=cfg.instrument_fn, interactions=cfg.interactions,
    )


def fit_both_groups(ds: Dataset, cfg: QrsConfig, weights=None):
    """Fits for group 0 and group 1 as a pair (fit0, fit1)."""
    return fit_group(ds, 0, cfg, weights), fit_group(ds, 1, cfg, weights)


def fit_to_dict(fit: QrsFit) -> dict:
    """JSON-serializable view of a fit (round-trips with fit_from_dict)."""
    return {
        "d": fit.d,
        "model": None if fit.model is None else {
            "link": fit.model.link,
            "gamma": [float(g) for g in fit.model.gamma],
            "converged": bool(fit.model.converged),
            "loglik": fit.model.loglik,
            "column_names": list(fit.model.column_names),
        },
        "copula": {"family": fit.copula.family, "theta": fit.copula.theta},
        "kendall_tau": copulas.kendall_tau(fit.copula),
        "tau_grid": {"eps": fit.tau_grid.eps, "step": fit.tau_grid.step},
        "beta": [[float(v) for v in row] for row in fit.beta],
        "pi_hat": [float(v) for v in fit.pi_hat],
        "criterion_value": fit.criterion_value,
        "criterion_trace": [[t, v] for t, v in fit.criterion_trace],
        "warnings": list(fit.warnings),
        "instrument_fn": fit.instrument_fn,
        "interactions": [list(p) for p in fit.interactions],
    }


def fit_from_dict(payload: dict) -> QrsFit:
    model = None
    if payload["model"] is not None:
        m = payload["model"]
        model = propensity.PropensityModel(
            link=m["link"], gamma=np.asarray(m["gamma"], dtype=float),
            converged=m["converged"], loglik=m["loglik"],
            column_names=tuple(m["column_names"]))
    return QrsFit(
        d=int(payload["d"]), model=model,
        copula=CopulaSpec(payload["copula"]["family"], payload["copula"]["theta"]),
        tau_grid=TauGrid(**payload["tau_grid"]),
        beta=np.asarray(payload["beta"], dtype=float),
        pi_hat=np.asarray(payload["pi_hat"], dtype=float),
        criterion_value=payload["criterion_value"],
        criterion_trace=tuple((t, v) for t, v in payload["criterion_trace"]),
        warnings=tuple(payload["warnings"]),
        instrument_fn=payload["instrument_fn"],
        interactions=tuple(tuple(p) for p in payload["interactions"]),
    )
