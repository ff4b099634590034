"""Adjacency spectral embedding and orthogonal Procrustes alignment."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg

__all__ = [
    "EigenPairs",
    "sym_eigen_topk",
    "ase_undirected",
    "ase_directed",
    "procrustes_align",
    "fix_signs",
]

SYM_TOL = 1e-10


class EigenPairs(NamedTuple):
    values: np.ndarray   # sorted by descending |value|
    vectors: np.ndarray  # orthonormal columns, paired with values


def fix_signs(vectors):
    """Flip columns so each one's largest-magnitude entry is positive.

    Ties in magnitude go to the lowest row index (``argmax`` semantics).
    Returns the flipped copy and the applied signs.
    """
    vectors = np.array(vectors, dtype=float, copy=True)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs, signs


def sym_eigen_topk(M, k):
    """Top-``k`` eigenpairs of a symmetric matrix, ranked by absolute eigenvalue.

    Only the two ends of the spectrum are computed when ``2k < n``; the
    candidates are then merged by magnitude (positive first on exact ties).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    n = M.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    asym = np.max(np.abs(M - M.T)) if n > 1 else 0.0
    if asym > SYM_TOL:
        raise ValueError(f"matrix is not symmetric (max |M - M^T| = {asym:.3g})")

    if 2 * k >= n:
        vals, vecs = scipy.linalg.eigh(M)
    else:
        hi_vals, hi_vecs = scipy.linalg.eigh(M, subset_by_index=[n - k, n - 1])
        lo_vals, lo_vecs = scipy.linalg.eigh(M, subset_by_index=[0, k - 1])
        vals = np.concatenate([lo_vals, hi_vals])
        vecs = np.hstack([lo_vecs, hi_vecs])
    order = np.lexsort((-vals, -np.abs(vals)))[:k]
    vecs, _ = fix_signs(vecs[:, order])
    return EigenPairs(vals[order], vecs)


def ase_undirected(A, d):
    """Adjacency spectral embedding ``V |S|^{1/2}`` into ``R^d``."""
    values, vectors = sym_eigen_topk(A, d)
    return vectors * np.sqrt(np.abs(values))


def ase_directed(A, d_half):
    """Directed embedding ``[U Σ^{1/2} | V Σ^{1/2}]`` from the top ``d_half`` singular triplets.

    Signs follow the left singular vectors (largest-magnitude entry positive);
    the paired right vectors are flipped with them so ``A v = σ u`` still holds.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if not 1 <= d_half or 2 * d_half > n:
        raise ValueError(f"d_half must satisfy 1 <= d_half <= n/2 = {n / 2}, got {d_half}")
    U, sv, Vt = np.linalg.svd(A)
    U, signs = fix_signs(U[:, :d_half])
    V = Vt[:d_half].T * signs
    root = np.sqrt(sv[:d_half])
    return np.hstack([U * root, V * root])


def procrustes_align(source, target):
    """Orthogonal ``W`` minimizing ``||source W - target||_F``, and ``source W``."""
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    if source.shape != target.shape:
        raise ValueError(f"shape mismatch: {source.shape} vs {target.shape}")
    U, _, Vt = np.linalg.svd(source.T @ target)
    W = U @ Vt
    return W, source @ W
