"""Exact bottleneck distance between persistence diagrams."""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .diagram import DiagramError, PersistenceDiagram


def _matching_size(adj: np.ndarray) -> int:
    if adj.shape[0] == 0 or adj.shape[1] == 0 or not adj.any():
        return 0
    match = maximum_bipartite_matching(csr_matrix(adj), perm_type="column")
    return int(np.count_nonzero(match >= 0))


def _feasible(cost: np.ndarray, half_a: np.ndarray, half_b: np.ndarray, eps: float) -> bool:
    """Is there a matching of cost <= eps?

    Every point whose diagonal cost exceeds eps must be matched off-diagonal.
    By the Mendelsohn-Dulmage theorem a matching covering both such sets
    exists iff one covers the left set and another covers the right set, so
    the diagonal copies never have to be materialized.
    """
    adj = cost <= eps
    must_a = half_a > eps
    must_b = half_b > eps
    if must_a.any() and _matching_size(adj[must_a]) < must_a.sum():
        return False
    if must_b.any() and _matching_size(adj[:, must_b].T) < must_b.sum():
        return False
    return True


def _finite_bottleneck(a: np.ndarray, b: np.ndarray) -> float:
    half_a = (a[:, 1] - a[:, 0]) / 2.0
    half_b = (b[:, 1] - b[:, 0]) / 2.0
    if len(a) == 0 or len(b) == 0:
        return float(max(half_a.max(initial=0.0), half_b.max(initial=0.0)))
    cost = np.maximum(
        np.abs(a[:, None, 0] - b[None, :, 0]),
        np.abs(a[:, None, 1] - b[None, :, 1]),
    )
    candidates = np.unique(np.concatenate([cost.ravel(), half_a, half_b, [0.0]]))
    lo, hi = 0, len(candidates) - 1
    # hi is always feasible: everything can go to the diagonal at max(half) cost
    while lo < hi:
        mid = (lo + hi) // 2
        if _feasible(cost, half_a, half_b, candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def bottleneck_distance(d1: PersistenceDiagram, d2: PersistenceDiagram) -> float:
    """W_inf between two diagrams of the same dimension.

    Points are compared in the sup norm and may be matched to the diagonal
    at cost (death - birth) / 2.  Infinite bars can only match each other;
    their optimal matching pairs them in order of birth.
    """
    if d1.dimension != d2.dimension:
        raise DiagramError(f"dimension mismatch: {d1.dimension} vs {d2.dimension}")
    e1, e2 = d1.essential, d2.essential
    if len(e1) != len(e2):
        raise DiagramError(f"infinite bar counts differ: {len(e1)} vs {len(e2)}")
    inf_cost = float(np.max(np.abs(e1 - e2), initial=0.0))
    return max(inf_cost, _finite_bottleneck(d1.finite, d2.finite))


def normalized_bottleneck(d1: PersistenceDiagram, d2: PersistenceDiagram, noise: float) -> float:
    if not noise > 0:
        raise ValueError(f"noise must be positive, got {noise}")
    return bottleneck_distance(d1, d2) / noise
