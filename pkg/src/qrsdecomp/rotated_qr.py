"""Weighted linear quantile regression with per-observation quantile levels.

The estimation problem is min_b sum_i w_i rho_{tau_i}(y_i - x_i' b), the
check-function loss where every observation carries its own level tau_i.
Solved exactly as a linear program via a Frisch-Newton primal-dual interior
point method on the bounded dual (k x k normal equations per iteration),
with a scipy/HiGHS fallback for degenerate instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CollinearityError, DomainError, QrsError

LEVEL_CLAMP = 1e-4  # rotated levels are clamped to [1e-4, 1 - 1e-4]


def check_loss(tau, r):
    """Check-function loss rho_tau(r): tau*r for r >= 0, (tau-1)*r for r < 0."""
    tau = np.asarray(tau, dtype=float)
    if np.any((tau <= 0.0) | (tau >= 1.0)):
        raise DomainError("quantile level must lie in (0, 1)")
    r = np.asarray(r, dtype=float)
    return np.where(r >= 0.0, tau * r, (tau - 1.0) * r)


@dataclass(frozen=True)
class QrProblem:
    """One rotated-QR instance: design, outcomes, levels, weights."""

    X: np.ndarray
    y: np.ndarray
    levels: np.ndarray
    weights: np.ndarray | None = field(default=None)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float)
        lev = np.asarray(self.levels, dtype=float)
        if lev.ndim == 0:
            lev = np.full(len(y), float(lev))
        w = (np.ones(len(y)) if self.weights is None
             else np.asarray(self.weights, dtype=float))
        if not (X.shape[0] == len(y) == len(lev) == len(w)):
            raise DomainError("X, y, levels, weights must have equal length")
        if np.any((lev <= 0.0) | (lev >= 1.0)):
            raise DomainError("levels must lie strictly inside (0, 1)")
        if np.any(w < 0.0):
            raise DomainError("weights must be nonnegative")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "levels", lev)
        object.__setattr__(self, "weights", w)

    def objective(self, b):
        r = self.y - self.X @ np.asarray(b, dtype=float)
        return float(np.sum(self.weights * check_loss(self.levels, r)))


def _interior_point(A, c, rhs, max_iter=60, tol=1e-10):
    """Mehrotra predictor-corrector for min c'a s.t. A a = rhs, 0 <= a <= 1.

    Returns (dual_y, gap). The equality duals are the QR coefficients.
    """
    k, n = A.shape
    x = np.full(n, 0.5)
    # Start on the equality manifold when possible: a = tau satisfies it.
    s = 1.0 - x
    AAt = A @ A.T
    try:
        y = np.linalg.solve(AAt, A @ c)
    except np.linalg.LinAlgError:
        y = np.linalg.lstsq(A, c, rcond=None)[0]
    r = c - A.T @ y
    z = np.maximum(r, 0.0) + 1e-3 + 0.1 * np.abs(r)
    w = z - r

    for _ in range(max_iter):
        mu = (x @ z + s @ w) / (2 * n)
        rp = rhs - A @ x
        rd = c - A.T @ y - z + w
        gap = abs(x @ z + s @ w)
        if gap < tol * (1.0 + abs(c @ x)) and np.max(np.abs(rp)) < 1e-9:
            break

        dvec = 1.0 / (z / x + w / s)

        def solve_direction(rc1, rc2):
            t = rd - rc1 / x + rc2 / s
            M = (A * dvec) @ A.T
            try:
                dy = np.linalg.solve(M, rp + A @ (dvec * t))
            except np.linalg.LinAlgError:
                dy = np.linalg.lstsq(M, rp + A @ (dvec * t), rcond=None)[0]
            dx = dvec * (A.T @ dy - t)
            ds = -dx
            dz = (rc1 - z * dx) / x
            dw = (rc2 - w * ds) / s
            return dx, ds, dy, dz, dw

        def step_len(v, dv):
            neg = dv < 0
            if not np.any(neg):
                return 1.0
            return min(1.0, float(np.min(-v[neg] / dv[neg])))

        # Affine (predictor) direction.
        dx, ds, dy, dz, dw = solve_direction(-x * z, -s * w)
        ap = min(step_len(x, dx), step_len(s, ds))
        ad = min(step_len(z, dz), step_len(w, dw))
        mu_aff = ((x + ap * dx) @ (z + ad * dz)
                  + (s + ap * ds) @ (w + ad * dw)) / (2 * n)
        sigma = (max(mu_aff, 0.0) / mu) ** 3 if mu > 0 else 0.1

        # Corrector.
        rc1 = sigma * mu - x * z - dx * dz
        rc2 = sigma * mu - s * w - ds * dw
        dx, ds, dy, dz, dw = solve_direction(rc1, rc2)
        ap = 0.9995 * min(step_len(x, dx), step_len(s, ds))
        ad = 0.9995 * min(step_len(z, dz), step_len(w, dw))
        ap = min(ap, 1.0)
        ad = min(ad, 1.0)
        x = x + ap * dx
        s = s + ap * ds
        y = y + ad * dy
        z = z + ad * dz
        w = w + ad * dw
    else:
        return y, np.inf
    return y, gap


def _solve_scipy(A, c, rhs):
    from scipy.optimize import linprog

    res = linprog(c, A_eq=A, b_eq=rhs, bounds=(0.0, 1.0), method="highs")
    if not res.success:
        raise QrsError("LP fallback failed: %s" % res.message)
    return np.asarray(res.eqlin.marginals, dtype=float)


def solve(p: QrProblem) -> np.ndarray:
    """Minimize the weighted per-level check loss; returns the coefficients.

    Solutions are set-valued at degenerate vertices; any optimal vertex is
    acceptable and callers should compare objective values, not coefficients.
    """
    active = p.weights > 0.0
    X = p.X[active]
    y = p.y[active]
    lev = np.clip(p.levels[active], LEVEL_CLAMP, 1.0 - LEVEL_CLAMP)
    w = p.weights[active]
    n, k = X.shape
    if n == 0:
        raise DomainError("no observations with positive weight")
    Xw = X * np.sqrt(w)[:, None]
    if np.linalg.matrix_rank(Xw) < k:
        raise CollinearityError(
            "design is rank deficient on the weighted support", columns=[])

    # Bounded dual: min (w*y)'a s.t. (X'W) a = X'W tau, 0 <= a <= 1;
    # the equality duals recover the primal coefficients.
    A = (X * w[:, None]).T
    c = w * y
    rhs = A @ lev

    if n > k:
        yd, gap = _interior_point(A, c, rhs)
        if np.isfinite(gap):
            b = yd
            if _subgradient_ok(X, y, lev, w, b):
                return b
    return _solve_scipy(A, c, rhs)


def _subgradient_ok(X, y, lev, w, b):
    # Optimality: each coordinate of sum_i w_i x_i (tau_i - 1(y_i < x_i'b))
    # must be coverable by observations sitting exactly on the fit.
    r = y - X @ b
    scale = 1.0 + float(np.max(np.abs(y)))
    on_fit = np.abs(r) <= 1e-7 * scale
    g = X.T @ (w * (lev - (r < -1e-7 * scale)))
    slack = np.abs(X[on_fit]).T @ w[on_fit] + 1e-8 * np.sum(w)
    return bool(np.all(np.abs(g) <= slack))


def brute_force_intercept(y, levels, weights=None, grid=None):
    """Exact scan of the piecewise-linear objective for intercept-only fits.

    The optimum lies at a sample point; used as an independent test oracle.
    """
    y = np.asarray(y, dtype=float)
    cand = np.unique(y if grid is None else np.asarray(grid, dtype=float))
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    lev = np.broadcast_to(np.asarray(levels, dtype=float), y.shape)
    objs = [float(np.sum(w * check_loss(lev, y - b))) for b in cand]
    i = int(np.argmin(objs))
    return float(cand[i]), float(objs[i])
