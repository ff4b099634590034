"""One-dimensional raw-stress embedding by Guttman-transform majorization (SMACOF)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .spectral import fix_signs

__all__ = [
    "MdsOptions",
    "Embedding1D",
    "raw_stress",
    "classical_mds_1d",
    "guttman_step",
    "minimize_raw_stress",
]

COINCIDENT = 1e-14


@dataclass(frozen=True)
class MdsOptions:
    max_iter: int = 500
    rel_tol: float = 1e-10
    restarts: int = 0
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iter < 0 or self.restarts < 0:
            raise ValueError("max_iter and restarts must be non-negative")


@dataclass(frozen=True)
class Embedding1D:
    z: np.ndarray
    final_stress: float
    iterations: int
    converged: bool


def _check(z, D):
    z = np.asarray(z, dtype=float).ravel()
    D = np.asarray(D, dtype=float)
    if D.shape != (z.size, z.size):
        raise ValueError(f"z has length {z.size} but D has shape {D.shape}")
    return z, D


def _weights(w, l):
    if w is None:
        return None
    w = np.asarray(w, dtype=float)
    if w.shape != (l, l):
        raise ValueError(f"weights must have shape {(l, l)}, got {w.shape}")
    if np.all(w == 1.0):
        return None
    return w


def raw_stress(z, D, w=None):
    """``sum_{i<j} w_ij (|z_i - z_j| - D_ij)^2``."""
    z, D = _check(z, D)
    w = _weights(w, z.size)
    resid = np.abs(z[:, None] - z[None, :]) - D
    terms = resid**2 if w is None else w * resid**2
    return float(np.sum(np.triu(terms, 1)))


def classical_mds_1d(D):
    """Top principal coordinate of ``B = -1/2 H (D∘D) H``.

    An all-zero ``D`` embeds at the origin.  If ``D`` has positive entries but
    ``B`` has no positive eigenvalue, a fixed pseudo-random configuration (seed
    0) scaled to the mean dissimilarity is returned instead.
    """
    D = np.asarray(D, dtype=float)
    l = D.shape[0]
    if D.shape != (l, l) or l < 2:
        raise ValueError(f"need a square matrix of size >= 2, got {D.shape}")
    if not np.any(D > 0):
        return np.zeros(l)
    H = np.eye(l) - 1.0 / l
    B = -0.5 * H @ (D * D) @ H
    B = 0.5 * (B + B.T)
    vals, vecs = np.linalg.eigh(B)
    if vals[-1] <= 0:
        z = np.random.default_rng(0).standard_normal(l) * D[D > 0].mean()
        return z - z.mean()
    v, _ = fix_signs(vecs[:, -1])
    return v[:, 0] * np.sqrt(vals[-1])


def _bmatrix(z, D, w):
    diff = np.abs(z[:, None] - z[None, :])
    ratio = np.zeros_like(diff)
    far = diff > COINCIDENT
    ratio[far] = D[far] / diff[far]
    B = -ratio if w is None else -w * ratio
    np.fill_diagonal(B, 0.0)
    np.fill_diagonal(B, -B.sum(axis=1))
    return B


def guttman_step(z, D, w=None, _vplus=None):
    """One Guttman transform ``z' = V^+ B(z) z`` (``V^+ = I/l`` on centered vectors for unit weights)."""
    z, D = _check(z, D)
    l = z.size
    w = _weights(w, l)
    Bz = _bmatrix(z, D, w) @ z
    if w is None:
        return Bz / l
    if _vplus is None:
        _vplus = _v_pinv(w)
    return _vplus @ Bz


def _v_pinv(w):
    V = -np.array(w, dtype=float)
    np.fill_diagonal(V, 0.0)
    np.fill_diagonal(V, -V.sum(axis=1))
    return np.linalg.pinv(V)


def _iterate(z, D, w, opts, vplus):
    stress = raw_stress(z, D, w)
    for it in range(1, opts.max_iter + 1):
        z_new = guttman_step(z, D, w, vplus)
        new = raw_stress(z_new, D, w)
        drop = (stress - new) / max(stress, 1e-300)
        z, stress = z_new, new
        if drop < opts.rel_tol:
            return z, stress, it, True
    return z, stress, opts.max_iter, False


def minimize_raw_stress(D, opts=None):
    """Best-effort raw-stress minimizer started from classical MDS.

    Extra restarts begin from the classical solution plus a perturbation drawn
    from seed ``k`` (restart ``k``); the lowest-stress run wins, ties going to
    the earlier run.  The returned configuration has mean zero.
    """
    opts = opts or MdsOptions()
    D = np.asarray(D, dtype=float)
    l = D.shape[0]
    if D.shape != (l, l):
        raise ValueError(f"D must be square, got {D.shape}")
    if l == 1:
        return Embedding1D(np.zeros(1), 0.0, 0, True)
    w = _weights(opts.weights, l)
    vplus = None if w is None else _v_pinv(w)

    init = classical_mds_1d(D)
    scale = float(np.std(init)) or float(D.mean()) or 1.0
    best = None
    for k in range(opts.restarts + 1):
        z0 = init if k == 0 else init + scale * np.random.default_rng(k).standard_normal(l)
        z, stress, its, conv = _iterate(z0, D, w, opts, vplus)
        if best is None or stress < best[1]:
            best = (z, stress, its, conv)
    z, _, its, conv = best
    z = z - z.mean()
    return Embedding1D(z, raw_stress(z, D, opts.weights), its, conv)
