"""Slow, obviously-correct reference computations used only by the tests."""

import itertools
import math

import numpy as np


def distance_matrix_loops(points):
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            d[i, j] = math.sqrt(sum((a - b) ** 2 for a, b in zip(pts[i], pts[j])))
    return d


def rips_bruteforce(dist, max_radius=np.inf):
    """Standard column reduction of the full boundary matrix up to triangles.

    Returns {0: [(b, d), ...], 1: [...]} with zero-persistence pairs removed.
    """
    n = len(dist)
    simplices = [((i,), 0.0) for i in range(n)]
    for i, j in itertools.combinations(range(n), 2):
        simplices.append(((i, j), dist[i][j]))
    for i, j, k in itertools.combinations(range(n), 3):
        simplices.append(((i, j, k), max(dist[i][j], dist[i][k], dist[j][k])))
    simplices = [s for s in simplices if s[1] <= max_radius]
    simplices.sort(key=lambda s: (s[1], len(s[0]), s[0]))
    index = {s: i for i, (s, _) in enumerate(simplices)}

    columns = []
    for s, _ in simplices:
        col = 0
        if len(s) > 1:
            for face in itertools.combinations(s, len(s) - 1):
                col |= 1 << index[face]
        columns.append(col)

    low_to_col = {}
    paired = set()
    pairs = {0: [], 1: []}
    for j, col in enumerate(columns):
        while col:
            low = col.bit_length() - 1
            if low not in low_to_col:
                break
            col ^= columns[low_to_col[low]]
        columns[j] = col
        if col:
            low = col.bit_length() - 1
            low_to_col[low] = j
            paired.update((low, j))
            birth_s, birth_v = simplices[low]
            death_v = simplices[j][1]
            if death_v > birth_v:
                pairs[len(birth_s) - 1].append((birth_v, death_v))
    for i, (s, v) in enumerate(simplices):
        if i not in paired and len(s) <= 2:
            pairs[len(s) - 1].append((v, math.inf))
    return {k: sorted(v) for k, v in pairs.items()}


def bottleneck_exhaustive(a, b):
    """Minimum over every partial matching between the finite points of a and b."""
    a = [tuple(p) for p in a]
    b = [tuple(p) for p in b]

    def diag(p):
        return (p[1] - p[0]) / 2.0

    best = math.inf
    for k in range(min(len(a), len(b)) + 1):
        for sa in itertools.combinations(range(len(a)), k):
            for sb in itertools.permutations(range(len(b)), k):
                cost = 0.0
                for i, j in zip(sa, sb):
                    cost = max(cost, abs(a[i][0] - b[j][0]), abs(a[i][1] - b[j][1]))
                for i in set(range(len(a))) - set(sa):
                    cost = max(cost, diag(a[i]))
                for j in set(range(len(b))) - set(sb):
                    cost = max(cost, diag(b[j]))
                best = min(best, cost)
    return best


def kruskal_lengths(dist):
    n = len(dist)
    edges = sorted((dist[i][j], i, j) for i in range(n) for j in range(i + 1, n))
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    out = []
    for w, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            out.append(w)
    return sorted(out)


def dj_bruteforce(x, y):
    """Discrete GH distance by scanning every permutation with plain loops."""
    dx = distance_matrix_loops(x)
    dy = distance_matrix_loops(y)
    n = len(dx)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        worst = 0.0
        for i in range(n):
            for j in range(n):
                worst = max(worst, abs(dx[i][j] - dy[perm[i]][perm[j]]))
        best = min(best, worst / 2)
    return best
