"""Simple linear regression on estimated regressors.

Covers least squares on true or substitute regressors, nearest-point
projection onto a known curve, prediction from raw-stress embeddings when the
curve is unknown, the F test for ``H0: beta = 0``, and slope estimators
corrected for measurement error in the regressors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import stats
from .errors import (
    DegenerateRegressors,
    NonPositiveDenominator,
    PerfectFit,
    SingularMoment,
)
from .geodesic import build_localization_graph, shortest_path_matrix
from .spectral import ase_undirected
from .stress import MdsOptions, minimize_raw_stress

__all__ = [
    "LinearFit",
    "FTestResult",
    "VarianceProfile",
    "ols_fit",
    "predict",
    "project_points",
    "project_to_curve",
    "estimate_regressors",
    "est_known_manifold",
    "embed_unknown_manifold",
    "predict_from_embedding",
    "pred_unknown_manifold",
    "f_statistic",
    "f_test",
    "naive_slope",
    "adjusted_estimator",
    "estimate_gamma_delta_method",
]

GRID_POINTS = 1024
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class LinearFit:
    alpha_hat: float
    beta_hat: float
    fitted: np.ndarray
    residuals: np.ndarray
    s: int
    t_mean: float = 0.0
    y_mean: float = 0.0


@dataclass(frozen=True)
class FTestResult:
    f_stat: float
    df1: int
    df2: int
    p_value: float
    reject_at: dict = field(default_factory=dict)


@dataclass(frozen=True)
class VarianceProfile:
    """Per-node variances ``var(t_hat_i - t_i)`` of the estimated regressors."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if np.any(~np.isfinite(g)) or np.any(g < 0):
            raise ValueError("variance profile entries must be finite and >= 0")
        object.__setattr__(self, "gamma", g)

    @property
    def total(self):
        return float(self.gamma.sum())


# --- least squares ----------------------------------------------------------


def ols_fit(t, y):
    """Least-squares line ``y ~ alpha + beta t``."""
    t = np.asarray(t, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if t.size != y.size:
        raise ValueError(f"length mismatch: {t.size} regressors, {y.size} responses")
    if t.size < 2:
        raise ValueError("need at least two observations")
    t_bar, y_bar = t.mean(), y.mean()
    tc = t - t_bar
    sxx = float(tc @ tc)
    if sxx <= 1e-12 * t.size:
        raise DegenerateRegressors(f"regressors have no spread (sum of squares {sxx:.3g})")
    beta = float(tc @ (y - y_bar)) / sxx
    alpha = y_bar - beta * t_bar
    fitted = alpha + beta * t
    return LinearFit(alpha, beta, fitted, y - fitted, t.size, float(t_bar), float(y_bar))


def predict(fit, t_new):
    return fit.alpha_hat + fit.beta_hat * np.asarray(t_new, dtype=float)


# --- projection onto a known curve -----------------------------------------


def project_points(curve, points):
    """Nearest-point parameters ``argmin_t ||x - psi(t)||`` for each row of ``points``.

    A 1024-point grid scan picks the best cell (exact ties to the smallest t),
    then golden-section search refines within the neighbouring cells down to
    ``1e-10 * L``.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    L = curve.length
    grid = np.linspace(0.0, L, GRID_POINTS)
    G = curve.eval(grid)
    d2 = (
        np.sum(P * P, axis=1)[:, None]
        - 2.0 * P @ G.T
        + np.sum(G * G, axis=1)[None, :]
    )
    dmin = d2.min(axis=1, keepdims=True)
    near = d2 <= dmin + 1e-12 * np.maximum(np.abs(dmin), 1.0)
    k = np.argmax(near, axis=1)

    a = grid[np.maximum(k - 1, 0)]
    b = grid[np.minimum(k + 1, GRID_POINTS - 1)]

    def dist2(t):
        diff = curve.eval(t) - P
        return np.sum(diff * diff, axis=1)

    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = dist2(c), dist2(d)
    n_iter = int(math.ceil(math.log(1e-10 * L / (2.0 * L / (GRID_POINTS - 1))) / math.log(_INVPHI))) + 1
    for _ in range(n_iter):
        left = fc <= fd  # minimum lies in [a, d]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        d_new = np.where(left, c, a + _INVPHI * (b - a))
        c_new = np.where(left, b - _INVPHI * (b - a), d)
        f_keep = np.where(left, fc, fd)
        t_eval = np.where(left, c_new, d_new)
        f_new = dist2(t_eval)
        fc = np.where(left, f_new, f_keep)
        fd = np.where(left, f_keep, f_new)
        c, d = c_new, d_new
    t_ref = 0.5 * (a + b)
    # never return something worse than the scanned grid point
    t_grid = grid[k]
    better = dist2(t_ref) <= dist2(t_grid)
    return np.where(better, t_ref, t_grid)


def project_to_curve(curve, point):
    return float(project_points(curve, np.asarray(point, dtype=float)[None, :])[0])


# --- known manifold ---------------------------------------------------------


def estimate_regressors(A, W, d, curve, X_hat=None):
    """Aligned embedding ``X_hat W`` and its projections onto ``curve``."""
    if X_hat is None:
        X_hat = ase_undirected(A, d)
    X_tilde = X_hat @ np.asarray(W, dtype=float)
    return X_tilde, project_points(curve, X_tilde)


def est_known_manifold(A, W, d, curve, y, X_hat=None):
    """Substitute estimates ``(alpha_sub, beta_sub)`` from projected regressors."""
    _, t_hat = estimate_regressors(A, W, d, curve, X_hat)
    y = np.asarray(y, dtype=float)
    if y.size != t_hat.size:
        raise ValueError(f"need one response per node ({t_hat.size}), got {y.size}")
    fit = ols_fit(t_hat, y)
    return fit.alpha_hat, fit.beta_hat


# --- unknown manifold -------------------------------------------------------


def embed_unknown_manifold(A, d, lam, l, graph_nodes=None, options=None, X_hat=None):
    """Raw-stress embedding of the first ``l`` nodes.

    The localization graph is built on the first ``graph_nodes`` embedded
    points (default: all ``n``); it must include the first ``l``.
    """
    if X_hat is None:
        X_hat = ase_undirected(A, d)
    n = X_hat.shape[0]
    m = n if graph_nodes is None else int(graph_nodes)
    if not 1 <= l <= m <= n:
        raise ValueError(f"need 1 <= l <= graph_nodes <= n, got l={l}, graph_nodes={m}, n={n}")
    g = build_localization_graph(X_hat[:m], lam)
    D = shortest_path_matrix(g, l)
    return minimize_raw_stress(D, options or MdsOptions())


def predict_from_embedding(z, y, r):
    """Fit ``y`` on ``z[:s]`` (``s = len(y)``) and predict at index ``r`` (0-based)."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    s = y.size
    if not s <= r < z.size:
        raise ValueError(f"target index must satisfy {s} <= r < {z.size}, got {r}")
    fit = ols_fit(z[:s], y)
    return float(predict(fit, z[r]))


def pred_unknown_manifold(A, d, lam, l, y, r, graph_nodes=None, options=None):
    """Predicted response at node ``r`` (0-based, ``s <= r < l``) from the first ``s`` labels."""
    s = np.asarray(y).size
    if s < 3:
        raise ValueError("need at least 3 labeled nodes")
    if not s <= r < l:
        raise ValueError(f"need s <= r < l, got s={s}, r={r}, l={l}")
    emb = embed_unknown_manifold(A, d, lam, l, graph_nodes, options)
    return predict_from_embedding(emb.z, y, r)


# --- model validity test ----------------------------------------------------


def f_statistic(y, y_hat, s):
    """``(s-2) * SSR / SSE`` over the first ``s`` observations."""
    if s < 3:
        raise ValueError("F statistic needs s >= 3")
    y = np.asarray(y, dtype=float)[:s]
    y_hat = np.asarray(y_hat, dtype=float)[:s]
    if y.size != s or y_hat.size != s:
        raise ValueError(f"need {s} responses and fitted values")
    y_bar = y.mean()
    ssr = float(np.sum((y_hat - y_bar) ** 2))
    sse = float(np.sum((y - y_hat) ** 2))
    sst = float(np.sum((y - y_bar) ** 2))
    if sse <= 1e-20 * sst or sse == 0.0:
        raise PerfectFit("residual sum of squares is zero; F statistic undefined")
    return (s - 2) * ssr / sse


def f_test(y, y_hat, s, level=0.05):
    """F test of ``H0: beta = 0``; rejects when F exceeds the ``1 - level`` quantile."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    F = f_statistic(y, y_hat, s)
    df2 = s - 2
    levels = sorted({0.01, 0.05, 0.10, float(level)})
    reject = {a: bool(F > stats.f_quantile(1.0 - a, 1, df2)) for a in levels}
    return FTestResult(F, 1, df2, stats.f_sf(F, 1, df2), reject)


# --- measurement-error adjustment (intercept-free model) -------------------


def naive_slope(t, y):
    """No-intercept least squares ``sum y t / sum t^2``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    denom = float(t @ t)
    if denom <= 1e-12:
        raise DegenerateRegressors("regressors are all (numerically) zero")
    return float(y @ t) / denom


def adjusted_estimator(t_hat, y, gamma):
    """``sum y t_hat / (sum t_hat^2 - sum Gamma)`` for ``y = beta t + eps``."""
    t_hat = np.asarray(t_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    total = gamma.total if isinstance(gamma, VarianceProfile) else float(np.sum(gamma))
    denom = float(t_hat @ t_hat) - total
    if denom <= 1e-12:
        raise NonPositiveDenominator(
            f"corrected denominator {denom:.3g} <= 0 (sum of variances {total:.3g})"
        )
    return float(y @ t_hat) / denom


def estimate_gamma_delta_method(X_tilde, curve, t_hat=None):
    """Plug-in delta-method estimate of ``var(t_hat_i - t_i)`` for every node.

    Uses the empirical version of the ASE limiting covariance
    ``Sigma(x) = Delta^-1 E[x'y (1 - x'y) y y'] Delta^-1`` (inner products
    clamped to [0, 1]) and the gradient ``psi'(t) / ||psi'(t)||^2`` of the
    curve inverse, evaluated at the projected regressors.
    """
    X = np.atleast_2d(np.asarray(X_tilde, dtype=float))
    n, d = X.shape
    if n < d:
        raise SingularMoment(f"need at least d={d} points, got {n}")
    delta = X.T @ X / n
    cond = np.linalg.cond(delta)
    if not np.isfinite(cond) or cond >= 1e12:
        raise SingularMoment(f"second-moment matrix is singular (condition number {cond:.3g})")
    if t_hat is None:
        t_hat = project_points(curve, X)
    tangent = np.atleast_2d(curve.tangent(np.asarray(t_hat, dtype=float)))
    g = tangent / np.sum(tangent * tangent, axis=1, keepdims=True)
    h = np.linalg.solve(delta, g.T).T  # rows: Delta^-1 g_i
    P = np.clip(X @ X.T, 0.0, 1.0)
    proj = h @ X.T  # (Delta^-1 g_i) . x_j
    quad = np.sum(P * (1.0 - P) * proj * proj, axis=1) / n  # g_i' Sigma(x_i) g_i
    return VarianceProfile(quad / n)
