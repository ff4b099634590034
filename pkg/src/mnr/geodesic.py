"""Localization graphs and shortest-path dissimilarities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial.distance import pdist, squareform

from .errors import DisconnectedError

__all__ = [
    "LocalizationGraph",
    "build_localization_graph",
    "shortest_path_matrix",
    "connectivity_report",
    "largest_component",
]

# coincident points still need a stored (positive) edge weight
_MIN_WEIGHT = np.finfo(float).tiny


@dataclass(frozen=True)
class LocalizationGraph:
    """Undirected graph joining points closer than ``lam``; weights are distances."""

    n: int
    lam: float
    weights: sp.csr_matrix

    @property
    def n_edges(self):
        return self.weights.nnz // 2

    def has_edge(self, i, j):
        return self.weights[i, j] > 0


def build_localization_graph(points, lam):
    """Join ``i != j`` iff ``||x_i - x_j|| < lam`` (strict)."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    if n < 2:
        return LocalizationGraph(n, float(lam), sp.csr_matrix((n, n)))
    dist = squareform(pdist(points))
    mask = dist < lam
    np.fill_diagonal(mask, False)
    rows, cols = np.nonzero(mask)
    w = np.maximum(dist[rows, cols], _MIN_WEIGHT)
    W = sp.csr_matrix((w, (rows, cols)), shape=(n, n))
    return LocalizationGraph(n, float(lam), W)


def connectivity_report(g):
    """Connected components as sorted index arrays, ordered by smallest member."""
    _, labels = connected_components(g.weights, directed=False)
    comps = {}
    for i, lab in enumerate(labels):
        comps.setdefault(lab, []).append(i)
    return [np.array(c) for c in sorted(comps.values(), key=lambda c: c[0])]


def _component_labels(g):
    labels = np.empty(g.n, dtype=int)
    for k, comp in enumerate(connectivity_report(g)):
        labels[comp] = k
    return labels


def largest_component(g):
    """Node indices of the largest component (ties go to the earliest one)."""
    comps = connectivity_report(g)
    return max(comps, key=len)


def shortest_path_matrix(g, sources):
    """Shortest-path distances among ``sources``, routing through all nodes of ``g``.

    ``sources`` is either an int ``l`` (meaning the first ``l`` nodes) or a
    sequence of node indices.  Raises :class:`DisconnectedError` if any two
    sources are in different components.
    """
    idx = np.arange(sources) if np.isscalar(sources) else np.asarray(sources, dtype=int)
    if idx.size == 0:
        return np.zeros((0, 0))
    if idx.min() < 0 or idx.max() >= g.n:
        raise IndexError(f"source indices must lie in [0, {g.n})")
    full = dijkstra(g.weights, directed=False, indices=idx)
    D = full[:, idx]
    if not np.all(np.isfinite(D)):
        labels = _component_labels(g)[idx]
        raise DisconnectedError(
            f"{len(np.unique(labels))} components among the {idx.size} requested nodes",
            labels=labels,
        )
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D
