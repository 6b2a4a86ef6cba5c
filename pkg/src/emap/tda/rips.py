"""Vietoris-Rips persistence in dimensions 0 and 1.

Filtration values follow the diameter convention: an edge enters at the
distance between its endpoints and a triangle at its longest edge.

H0 comes from Kruskal's algorithm on the sorted edge list.  H1 is computed
as persistent cohomology: the coboundary matrix of the non-tree edges is
reduced over Z/2 in reverse filtration order.  Tree edges are cleared (they
are paired with vertices already), and triangle rows are never stored; a
column's coboundary is regenerated on demand from the edge rank matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Union

import heapq

import numpy as np
from numba import njit, types
from numba.typed import Dict, List as NumbaList

from ..geometry import PointCloud, pairwise_distances
from .diagram import PersistenceDiagram

DEFAULT_SIMPLEX_BUDGET = 5_000_000
FULL_FILTRATION_MAX_POINTS = 500


class SimplexBudgetExceeded(RuntimeError):
    def __init__(self, count: int, budget: int):
        super().__init__(f"Rips complex has {count} simplices, over the budget of {budget}")
        self.count = count
        self.budget = budget


@dataclass(frozen=True)
class FiltrationParams:
    max_dimension: int = 1
    max_radius: float = np.inf
    simplex_budget: int = DEFAULT_SIMPLEX_BUDGET

    def __post_init__(self):
        if self.max_dimension not in (0, 1):
            raise ValueError("max_dimension must be 0 or 1")
        if not self.max_radius > 0:
            raise ValueError("max_radius must be positive (or inf)")


@dataclass
class EdgeFiltration:
    """Edges of the thresholded complex sorted by (length, i, j)."""

    n: int
    src: np.ndarray
    dst: np.ndarray
    length: np.ndarray
    rank: np.ndarray  # n x n, -1 where the edge is absent

    @classmethod
    def build(cls, dist: np.ndarray, max_radius: float = np.inf) -> "EdgeFiltration":
        n = dist.shape[0]
        iu, ju = np.triu_indices(n, k=1)
        vals = dist[iu, ju]
        keep = vals <= max_radius
        iu, ju, vals = iu[keep], ju[keep], vals[keep]
        order = np.lexsort((ju, iu, vals))
        iu, ju, vals = iu[order], ju[order], vals[order]
        rank = np.full((n, n), -1, dtype=np.int64)
        r = np.arange(len(vals), dtype=np.int64)
        rank[iu, ju] = r
        rank[ju, iu] = r
        return cls(n, iu.astype(np.int64), ju.astype(np.int64), vals, rank)

    def triangle_count(self) -> int:
        adj = (self.rank >= 0).astype(float)
        # trace(A^3) / 6, exact in float64 for any n we could store
        return int(round(np.einsum("ij,ji->", adj @ adj, adj) / 6.0))


def _find(parent: np.ndarray, x: int) -> int:
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


def h0_from_edges(filt: EdgeFiltration):
    """Return (H0 pairs, boolean mask of tree edges)."""
    parent = np.arange(filt.n)
    tree = np.zeros(len(filt.length), dtype=bool)
    deaths = []
    for e in range(len(filt.length)):
        a, b = _find(parent, filt.src[e]), _find(parent, filt.dst[e])
        if a != b:
            # elder rule is moot: every vertex is born at 0
            parent[max(a, b)] = min(a, b)
            tree[e] = True
            deaths.append(filt.length[e])
            if len(deaths) == filt.n - 1:
                break
    n_components = filt.n - len(deaths)
    pairs = [(0.0, d) for d in deaths] + [(0.0, np.inf)] * n_components
    return np.array(pairs, dtype=float).reshape(-1, 2), tree


@njit(cache=True)
def _min_coface(e, rank, src, dst, n):
    i = src[e]
    j = dst[e]
    best = -1
    ri = rank[i]
    rj = rank[j]
    for k in range(n):
        if k == i or k == j:
            continue
        a = ri[k]
        b = rj[k]
        if a < 0 or b < 0:
            continue
        if a < e and b < e:
            # e is the longest edge, and k is the smallest such vertex: global minimum
            return e * n + k
        if a > b:
            key = a * n + j
        else:
            key = b * n + i
        if best < 0 or key < best:
            best = key
    return best


@njit(cache=True)
def _coboundary(e, rank, src, dst, n):
    i = src[e]
    j = dst[e]
    out = np.empty(n, dtype=np.int64)
    c = 0
    for k in range(n):
        if k == i or k == j:
            continue
        a = rank[i, k]
        b = rank[j, k]
        if a < 0 or b < 0:
            continue
        if a < e and b < e:
            out[c] = e * n + k
        elif a > b:
            out[c] = a * n + j
        else:
            out[c] = b * n + i
        c += 1
    return np.sort(out[:c])


@njit(cache=True)
def _pop_pivot(heap):
    """Pop entries off a Z/2 working column until an odd-multiplicity minimum appears."""
    while len(heap) > 0:
        top = heapq.heappop(heap)
        parity = 1
        while len(heap) > 0 and heap[0] == top:
            heapq.heappop(heap)
            parity ^= 1
        if parity == 1:
            return top
    return -1


@njit(cache=True)
def _h1_cohomology(rank, src, dst, tree, n):
    m = len(src)
    # pivot triangle key -> edge whose column owns it
    owner = Dict.empty(key_type=types.int64, value_type=types.int64)
    # reduced columns that differ from the raw coboundary, indexed through slot[]
    slot = np.full(m, -1, dtype=np.int64)
    stored = NumbaList()
    stored.append(np.empty(0, dtype=np.int64))
    births = np.empty(m, dtype=np.int64)
    deaths = np.empty(m, dtype=np.int64)
    c = 0
    for e in range(m - 1, -1, -1):
        if tree[e]:
            continue
        piv = _min_coface(e, rank, src, dst, n)
        if piv < 0:
            births[c] = e
            deaths[c] = -1
            c += 1
            continue
        if piv // n == e:
            # apparent pair: zero persistence, and no other column can own this triangle
            owner[piv] = e
            continue
        if piv not in owner:
            owner[piv] = e
            births[c] = e
            deaths[c] = piv // n
            c += 1
            continue
        heap = list(_coboundary(e, rank, src, dst, n))
        heapq.heapify(heap)
        piv = _pop_pivot(heap)
        while piv >= 0 and piv in owner:
            o = owner[piv]
            if slot[o] >= 0:
                other = stored[slot[o]]
            else:
                other = _coboundary(o, rank, src, dst, n)
            # other[0] == piv cancels the popped pivot
            for t in range(1, len(other)):
                heapq.heappush(heap, other[t])
            piv = _pop_pivot(heap)
        births[c] = e
        if piv < 0:
            deaths[c] = -1
        else:
            rest = [piv]
            nxt = _pop_pivot(heap)
            while nxt >= 0:
                rest.append(nxt)
                nxt = _pop_pivot(heap)
            owner[piv] = e
            slot[e] = len(stored)
            stored.append(np.array(rest, dtype=np.int64))
            deaths[c] = piv // n
        c += 1
    return births[:c], deaths[:c]


def h1_from_edges(filt: EdgeFiltration, tree: np.ndarray) -> np.ndarray:
    if filt.n < 3 or len(filt.length) == 0:
        return np.zeros((0, 2))
    b, d = _h1_cohomology(filt.rank, filt.src, filt.dst, tree, filt.n)
    birth = filt.length[b]
    death = np.where(d >= 0, filt.length[np.maximum(d, 0)], np.inf)
    keep = death > birth
    return np.column_stack([birth[keep], death[keep]])


def rips_persistence(
    cloud: Union[PointCloud, np.ndarray],
    params: FiltrationParams = FiltrationParams(),
    distances: np.ndarray = None,
) -> List[PersistenceDiagram]:
    """Persistence diagrams [D_0, ..., D_max_dimension] of the Rips filtration.

    Zero-persistence pairs are dropped.  Without an explicit ``max_radius``
    the full filtration is used, which is only allowed up to 500 points.
    """
    dist = pairwise_distances(cloud) if distances is None else np.asarray(distances, dtype=float)
    n = dist.shape[0]
    if n < 1:
        raise ValueError("rips_persistence needs at least one point")
    if np.isinf(params.max_radius) and n > FULL_FILTRATION_MAX_POINTS:
        raise ValueError(
            f"{n} points: set FiltrationParams.max_radius explicitly above "
            f"{FULL_FILTRATION_MAX_POINTS} points"
        )
    filt = EdgeFiltration.build(dist, params.max_radius)
    count = n + len(filt.length)
    if params.max_dimension >= 1:
        count += filt.triangle_count()
    if count > params.simplex_budget:
        raise SimplexBudgetExceeded(count, params.simplex_budget)

    h0, tree = h0_from_edges(filt)
    keep = h0[:, 1] > h0[:, 0]
    out = [PersistenceDiagram(0, h0[keep])]
    if params.max_dimension >= 1:
        out.append(PersistenceDiagram(1, h1_from_edges(filt, tree)))
    return out
