"""Weighted maximum-likelihood probit/logit for the participation probability.

Fitted group by group on the design (1, z1, covariates); bootstrap passes
per-observation weights. Newton-Raphson with step-halving; both links have
a concave log-likelihood so this is globally convergent away from
separation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_ndtr, ndtr

from .data import Dataset
from .errors import CollinearityError, ConvergenceError, DomainError, SeparationError

PROBIT = "probit"
LOGIT = "logit"

CLAMP = 1e-6  # keeps predictions inside the open unit interval
_MAX_ITER = 100
_GRAD_TOL = 1e-10  # on the weight-normalized gradient; scale invariant


@dataclass(frozen=True)
class PropensityModel:
    """Fitted binary-choice model for P(S=1 | z)."""

    link: str
    gamma: np.ndarray
    converged: bool
    loglik: float
    column_names: tuple

    def __post_init__(self):
        self.gamma.setflags(write=False)


def design_matrix(ds: Dataset, mask=None, interactions=None):
    """(1, z1, covariates) design with optional named interaction products."""
    if mask is None:
        mask = np.ones(ds.n, dtype=bool)
    sch = ds.schema
    cols = {sch.instrument_col: ds.z1[mask]}
    for j, name in enumerate(sch.covariate_cols):
        cols[name] = ds.x[mask, j + 1]
    names = ["intercept", sch.instrument_col, *sch.covariate_cols]
    arrays = [np.ones(int(np.sum(mask))), ds.z1[mask]]
    arrays += [ds.x[mask, j + 1] for j in range(len(sch.covariate_cols))]
    for a, b in interactions or ():
        if a not in cols or b not in cols:
            raise DomainError("interaction names %r not in schema" % ((a, b),))
        names.append("%s:%s" % (a, b))
        arrays.append(cols[a] * cols[b])
    return np.column_stack(arrays), tuple(names)


def _check_rank(design, names):
    r = np.linalg.matrix_rank(design)
    if r < design.shape[1]:
        # Name the columns implicated by the rank drop via pivoted QR.
        from scipy.linalg import qr

        _, rr, piv = qr(design, mode="economic", pivoting=True)
        diag = np.abs(np.diag(rr))
        tol = diag.max() * max(design.shape) * np.finfo(float).eps
        bad = [names[piv[i]] for i in range(design.shape[1]) if diag[i] <= tol]
        raise CollinearityError(
            "design matrix is rank deficient (%d < %d)" % (r, design.shape[1]),
            columns=bad or [names[-1]])


def _loglik_grad_hess(link, design, s, w, gamma):
    eta = design @ gamma
    if link == PROBIT:
        # Stable probit score: phi/Phi via log_ndtr.
        lp1 = log_ndtr(eta)
        lp0 = log_ndtr(-eta)
        ll = float(np.sum(w * np.where(s == 1, lp1, lp0)))
        phi = np.exp(-0.5 * eta**2) / np.sqrt(2.0 * np.pi)
        lam1 = phi / np.maximum(ndtr(eta), 1e-300)
        lam0 = phi / np.maximum(ndtr(-eta), 1e-300)
        score = np.where(s == 1, lam1, -lam0)
        grad = design.T @ (w * score)
        hdiag = np.where(s == 1, lam1 * (lam1 + eta), lam0 * (lam0 - eta))
        hess = -(design * (w * hdiag)[:, None]).T @ design
    else:
        p = expit(eta)
        ll = float(np.sum(w * (s * eta - np.logaddexp(0.0, eta))))
        grad = design.T @ (w * (s - p))
        hess = -(design * (w * p * (1.0 - p))[:, None]).T @ design
    return ll, grad, hess


def fit_propensity(ds: Dataset, d, link=PROBIT, weights=None,
                   interactions=None) -> PropensityModel:
    """Weighted MLE of the participation equation for group ``d``."""
    if link not in (PROBIT, LOGIT):
        raise DomainError("link must be 'probit' or 'logit', got %r" % (link,))
    mask = ds.group_mask(d)
    s = np.asarray(ds.s[mask], dtype=float)
    if not (np.any(s == 1) and np.any(s == 0)):
        raise DomainError("group %r needs both s=0 and s=1 rows" % (d,))
    design, names = design_matrix(ds, mask, interactions)
    _check_rank(design, names)
    if weights is None:
        w = np.ones(len(s))
    else:
        w = np.asarray(weights, dtype=float)[mask]
        if np.any(w < 0):
            raise DomainError("weights must be nonnegative")
    wsum = float(np.sum(w))

    gamma = np.zeros(design.shape[1])
    ll, grad, hess = _loglik_grad_hess(link, design, s, w, gamma)
    converged = False
    for _ in range(_MAX_ITER):
        if np.max(np.abs(grad)) / wsum < _GRAD_TOL:
            converged = True
            break
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        # Step-halving keeps the concave objective increasing.
        scale = 1.0
        for _ in range(40):
            cand = gamma + scale * step
            ll_new, grad_new, hess_new = _loglik_grad_hess(link, design, s, w, cand)
            if ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            scale *= 0.5
        gamma, ll, grad, hess = cand, ll_new, grad_new, hess_new
        _raise_if_separated(design, s, gamma, link)
    else:
        if np.max(np.abs(grad)) / wsum >= _GRAD_TOL:
            raise ConvergenceError(
                "propensity fit did not converge in %d iterations" % _MAX_ITER,
                last_iterate=gamma)
        converged = True
    _raise_if_separated(design, s, gamma, link)
    return PropensityModel(link=link, gamma=gamma.copy(), converged=converged,
                           loglik=ll, column_names=names)


def _raise_if_separated(design, s, gamma, link):
    eta = design @ gamma
    p = ndtr(eta) if link == PROBIT else expit(eta)
    if np.all(p[s == 1] > 1.0 - 1e-6) and np.all(p[s == 0] < 1e-6):
        raise SeparationError("perfect separation: likelihood is unbounded")


def predict(model: PropensityModel, z) -> np.ndarray:
    """Predicted propensity for design rows ``z``, clamped to the open interval."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        if z.shape[0] != model.gamma.shape[0]:
            raise DomainError("design row length %d != %d coefficients"
                              % (z.shape[0], model.gamma.shape[0]))
    elif z.shape[1] != model.gamma.shape[0]:
        raise DomainError("design has %d columns, expected %d"
                          % (z.shape[1], model.gamma.shape[0]))
    eta = z @ model.gamma
    p = ndtr(eta) if model.link == PROBIT else expit(eta)
    return np.clip(p, CLAMP, 1.0 - CLAMP)


def predict_dataset(model: PropensityModel, ds: Dataset, mask=None,
                    interactions=None) -> np.ndarray:
    design, names = design_matrix(ds, mask, interactions)
    if names != model.column_names:
        raise DomainError("design columns %r do not match fitted %r"
                          % (names, model.column_names))
    return predict(model, design)
