"""Curves carrying the latent positions, and RDPG / regression sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import DomainError
from .stats import as_generator

__all__ = [
    "ParamCurve",
    "curve_hardy_weinberg",
    "curve_diag_line",
    "InnerProductReport",
    "validate_inner_products",
    "check_adjacency",
    "sample_rdpg",
    "sample_rdpg_directed",
    "RegressionScenario",
    "sample_scenario",
]

IP_TOL = 1e-9


@dataclass(frozen=True)
class ParamCurve:
    """A curve ``psi: [0, length] -> R^d``.

    ``func`` (and ``deriv``, if given) must be vectorized: an array of ``m``
    parameters maps to an ``(m, d)`` array.
    """

    length: float
    func: Callable[[np.ndarray], np.ndarray]
    deriv: Optional[Callable[[np.ndarray], np.ndarray]] = None
    arclength: bool = False
    name: str = "curve"

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("curve length must be positive")

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        out = np.asarray(self.func(np.atleast_1d(t)), dtype=float)
        return out[0] if t.ndim == 0 else out

    def tangent(self, t):
        """Derivative; central differences with step ``1e-6 * length`` if none supplied."""
        t = np.asarray(t, dtype=float)
        tt = np.atleast_1d(t)
        if self.deriv is not None:
            out = np.asarray(self.deriv(tt), dtype=float)
        else:
            h = 1e-6 * self.length
            lo = np.clip(tt - h, 0.0, self.length)
            hi = np.clip(tt + h, 0.0, self.length)
            out = (self.func(hi) - self.func(lo)) / (hi - lo)[:, None]
        return out[0] if t.ndim == 0 else out

    @property
    def dim(self):
        return int(np.atleast_2d(self.eval(np.array([0.0]))).shape[1])


def _hw(t):
    return np.column_stack([t**2, 2 * t * (1 - t), (1 - t) ** 2])


def _hw_deriv(t):
    return np.column_stack([2 * t, 2 - 4 * t, -2 * (1 - t)])


def curve_hardy_weinberg():
    """``t -> (t^2, 2t(1-t), (1-t)^2)`` on [0, 1]."""
    return ParamCurve(1.0, _hw, _hw_deriv, arclength=False, name="hardy_weinberg")


def _diag(t):
    return np.repeat(0.5 * t[:, None], 4, axis=1)


def _diag_deriv(t):
    return np.full((len(t), 4), 0.5)


def curve_diag_line():
    """``t -> (t/2, t/2, t/2, t/2)`` on [0, 1]; unit speed."""
    return ParamCurve(1.0, _diag, _diag_deriv, arclength=True, name="diag_line")


class InnerProductReport(NamedTuple):
    min_ip: float
    max_ip: float
    valid: bool


def validate_inner_products(curve, grid_size, tol=1e-12):
    """Check that all pairwise inner products on a uniform grid lie in [0, 1]."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    pts = curve.eval(np.linspace(0.0, curve.length, grid_size))
    G = pts @ pts.T
    lo, hi = float(G.min()), float(G.max())
    return InnerProductReport(lo, hi, bool(lo >= -tol and hi <= 1.0 + tol))


def check_adjacency(A, directed=False):
    """Validate a binary hollow adjacency matrix; returns it as a float array."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {A.shape}")
    if not np.all((A == 0) | (A == 1)):
        raise ValueError("adjacency entries must be 0 or 1")
    if np.any(np.diag(A) != 0):
        raise ValueError("adjacency must be hollow (zero diagonal)")
    if not directed and not np.array_equal(A, A.T):
        raise ValueError("undirected adjacency must be symmetric")
    return A


def _edge_probabilities(X_out, X_in, pairs):
    rows, cols = pairs
    p = (X_out @ X_in.T)[rows, cols]
    bad = np.flatnonzero((p < -IP_TOL) | (p > 1 + IP_TOL))
    if bad.size:
        k = bad[0]
        raise DomainError(
            f"inner product of rows {rows[k]} and {cols[k]} is {p[k]:.6g}, outside [0, 1]"
        )
    return np.clip(p, 0.0, 1.0)


def sample_rdpg(X, rng):
    """Undirected hollow RDPG: ``A_ij ~ Bernoulli(x_i . x_j)`` for ``i < j``, mirrored.

    Exactly ``n(n-1)/2`` uniforms are drawn, in row-major upper-triangle order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    iu = np.triu_indices(n, 1)
    p = _edge_probabilities(X, X, iu)
    u = as_generator(rng).random(p.size)
    A = np.zeros((n, n))
    A[iu] = u < p
    return A + A.T


def sample_rdpg_directed(X_out, X_in, rng):
    """Directed hollow RDPG: ``A_ij ~ Bernoulli(x_out_i . x_in_j)`` for ``i != j``."""
    X_out = np.atleast_2d(np.asarray(X_out, dtype=float))
    X_in = np.atleast_2d(np.asarray(X_in, dtype=float))
    if X_out.shape != X_in.shape:
        raise ValueError("out- and in-positions must have the same shape")
    n = X_out.shape[0]
    off = np.nonzero(~np.eye(n, dtype=bool))
    p = _edge_probabilities(X_out, X_in, off)
    u = as_generator(rng).random(p.size)
    A = np.zeros((n, n))
    A[off] = u < p
    return A


@dataclass(frozen=True)
class RegressionScenario:
    alpha: float
    beta: float
    sigma_eps: float
    s: int
    t: np.ndarray  # regressors for all n nodes
    y: np.ndarray  # responses for the first s nodes


def sample_scenario(curve, n, s, alpha, beta, sigma_eps, rng):
    """Draw ``t_i ~ U[0, L]`` for n nodes and ``y_i = alpha + beta t_i + eps_i`` for the first s.

    Returns the scenario and the latent matrix with rows ``psi(t_i)``.
    """
    if n < 1 or not 0 <= s <= n:
        raise ValueError(f"need n >= 1 and 0 <= s <= n, got n={n}, s={s}")
    if not sigma_eps > 0:
        raise ValueError("sigma_eps must be positive")
    gen = as_generator(rng)
    t = curve.length * gen.random(n)
    eps = sigma_eps * gen.standard_normal(s)
    y = alpha + beta * t[:s] + eps
    scenario = RegressionScenario(alpha, beta, sigma_eps, s, t, y)
    return scenario, curve.eval(t)
