"""Discrete Gromov-Hausdorff distance over index permutations.

d_J(X, Y) = min over permutations pi of D_pi, where
D_pi = 1/2 max_{i,j} |d(x_i, x_j) - d(y_pi(i), y_pi(j))|.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Optional, Tuple, Union

import numpy as np

from .geometry import PointCloud, pairwise_distances

BRUTE_FORCE_MAX_N = 9
_PERM_BLOCK = 40320  # 8!, keeps a block of distortion matrices under ~200 MB at n = 9


class GHError(ValueError):
    pass


class GHMode(str, Enum):
    BRUTE_FORCE = "brute_force"
    IDENTITY_FAST_PATH = "identity_fast_path"
    CHECKED = "checked"


@dataclass(frozen=True)
class GhResult:
    distance: float
    optimal_permutation: np.ndarray
    mode: str

    def to_json(self) -> str:
        return json.dumps(
            {"distance": self.distance, "permutation": self.optimal_permutation.tolist(), "mode": self.mode}
        )


def _points(c: Union[PointCloud, np.ndarray]) -> np.ndarray:
    return c.points if isinstance(c, PointCloud) else np.atleast_2d(np.asarray(c, dtype=float))


def _as_dist(c) -> np.ndarray:
    return pairwise_distances(_points(c))


def validate_permutation(perm) -> np.ndarray:
    p = np.asarray(perm, dtype=np.int64)
    if p.ndim != 1 or not np.array_equal(np.sort(p), np.arange(len(p))):
        raise GHError(f"not a permutation: {perm}")
    return p


def distortion(dx: np.ndarray, dy: np.ndarray, perm=None) -> float:
    """D_pi for distance matrices dx, dy; identity when perm is None."""
    if perm is None:
        return 0.5 * float(np.max(np.abs(dx - dy)))
    p = validate_permutation(perm)
    return 0.5 * float(np.max(np.abs(dx - dy[np.ix_(p, p)])))


def _perm_blocks(n: int) -> Iterator[np.ndarray]:
    it = itertools.permutations(range(n))
    while True:
        block = list(itertools.islice(it, _PERM_BLOCK))
        if not block:
            return
        yield np.array(block, dtype=np.int64)


def _block_distortions(dx: np.ndarray, dy: np.ndarray, perms: np.ndarray) -> np.ndarray:
    permuted = dy[perms[:, :, None], perms[:, None, :]]
    return 0.5 * np.abs(dx[None] - permuted).max(axis=(1, 2))


def _check_pair(x, y) -> Tuple[np.ndarray, np.ndarray]:
    dx, dy = _as_dist(x), _as_dist(y)
    if dx.shape != dy.shape:
        raise GHError(f"clouds must have equal size, got {dx.shape[0]} and {dy.shape[0]}")
    return dx, dy


def discrete_gh(x, y, mode: Union[GHMode, str] = GHMode.BRUTE_FORCE) -> GhResult:
    """Discrete GH distance between two equal-size clouds.

    ``brute_force`` scans all n! permutations (n <= 9).  ``identity_fast_path``
    returns D_identity and trusts the caller that y is an index-aligned
    perturbation below the small-radius bound.  ``checked`` computes that
    bound from x and refuses perturbations that move any point too far.
    """
    mode = GHMode(mode)
    dx, dy = _check_pair(x, y)
    n = dx.shape[0]
    identity = np.arange(n)
    if mode is GHMode.IDENTITY_FAST_PATH:
        return GhResult(distortion(dx, dy), identity, mode.value)
    if mode is GHMode.CHECKED:
        bound = lemma1_radius_bound(x)
        moved = np.linalg.norm(_points(x) - _points(y), axis=1).max()
        if not moved < bound:
            raise GHError(f"perturbation radius {moved:.3g} is not below the identity bound {bound:.3g}")
        return GhResult(distortion(dx, dy), identity, mode.value)

    if n > BRUTE_FORCE_MAX_N:
        raise GHError(f"brute force is capped at n = {BRUTE_FORCE_MAX_N}, got n = {n}")
    best, best_perm = np.inf, identity
    for perms in _perm_blocks(n):
        vals = _block_distortions(dx, dy, perms)
        k = int(np.argmin(vals))
        # strict '<' keeps the lexicographically first optimum, so identity wins ties
        if vals[k] < best:
            best, best_perm = float(vals[k]), perms[k]
    return GhResult(best, best_perm, mode.value)


def _default_tol(dx: np.ndarray) -> float:
    return 1e-9 * max(float(dx.max()), 1.0 if dx.max() == 0 else 0.0)


def is_generic(cloud, tol: Optional[float] = None) -> bool:
    """True iff two pairwise distances differ by more than tol (default 1e-9 x diameter)."""
    dx = _as_dist(cloud)
    if dx.shape[0] < 2:
        raise GHError("genericity needs at least two points")
    tol = _default_tol(dx) if tol is None else tol
    vals = dx[np.triu_indices(dx.shape[0], k=1)]
    return bool(vals.max() - vals.min() > tol)


def self_distortion_gap(cloud, tol: Optional[float] = None) -> float:
    """delta = min D_pi(X, X) over permutations that do not preserve distances.

    Permutations whose self-distortion is within tol of zero count as
    isometries of the cloud (the set N0 in the argument for the identity
    fast path).
    """
    dx = _as_dist(cloud)
    n = dx.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise GHError(f"the permutation scan is capped at n = {BRUTE_FORCE_MAX_N}, got n = {n}")
    if n < 2 or not is_generic(cloud, tol):
        raise GHError("cloud is not generic: every pairwise distance is equal")
    tol = _default_tol(dx) if tol is None else tol
    delta = np.inf
    for perms in _perm_blocks(n):
        vals = _block_distortions(dx, dx, perms)
        vals = vals[vals > tol]
        if len(vals):
            delta = min(delta, float(vals.min()))
    return delta


def lemma1_radius_bound(cloud, tol: Optional[float] = None) -> float:
    """delta / 4: below this per-point radius the identity is an optimal permutation."""
    return self_distortion_gap(cloud, tol) / 4.0


def theorem1_witness(cloud, r: float, pair: Tuple[int, int] = (0, 1), check_regime: bool = True) -> PointCloud:
    """In-subspace perturbation whose d_J to the cloud is at least r.

    Points ``pair[0]`` and ``pair[1]`` are pushed apart along the line
    through them, each by exactly r, so their distance grows by 2r; all
    other points stay put.  The displacement stays inside any affine
    subspace containing the cloud.
    """
    pts = _points(cloud)
    n = pts.shape[0]
    if n < 2:
        raise GHError("the witness needs n >= 2")
    if r < 0:
        raise GHError("radius must be non-negative")
    if check_regime and n <= BRUTE_FORCE_MAX_N:
        bound = lemma1_radius_bound(cloud)
        if not r < bound:
            raise GHError(f"r = {r:.3g} is outside the small-radius regime (bound {bound:.3g})")
    i, j = pair
    u = pts[j] - pts[i]
    norm = np.linalg.norm(u)
    if norm == 0:
        raise GHError(f"points {i} and {j} coincide")
    u = u / norm
    z = pts.copy()
    z[i] -= r * u
    z[j] += r * u
    labels = cloud.labels if isinstance(cloud, PointCloud) else None
    return PointCloud(z, labels, name="theorem1_witness")
