"""Perturbation schemes and the manifold-orthogonal sampler."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .geometry import PointCloud, Seed, as_rng, gaussian_noise, save_csv
from .manifold import LINEAR_PCA, LocalSubspace, Mapper, fit_local_subspace, fit_mapper

GAUSSIAN = "gaussian"
PROJECTION = "projection"
ORTHOGONAL = "orthogonal"
ZERO_MASK = "zero_mask"
MULTIPLICATIVE_UNIFORM = "multiplicative_uniform"
EMAP = "emap"
SCHEMES = (GAUSSIAN, PROJECTION, ORTHOGONAL, ZERO_MASK, MULTIPLICATIVE_UNIFORM)

MAX_REDRAWS = 100


class PerturbationError(ValueError):
    pass


@dataclass(frozen=True)
class PerturbationScheme:
    kind: str
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in SCHEMES + (EMAP,):
            raise PerturbationError(f"unknown scheme {self.kind!r}")
        if self.radius < 0:
            raise PerturbationError("radius must be >= 0")


@dataclass(frozen=True)
class Subspace:
    """A known affine subspace: ``origin`` plus the column span of ``basis``."""

    origin: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        q, _ = np.linalg.qr(np.atleast_2d(np.asarray(self.basis, dtype=float).T).T)
        object.__setattr__(self, "basis", q)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))

    @classmethod
    def coordinate(cls, ambient_dim: int, low_dim: int) -> "Subspace":
        """The span of the first ``low_dim`` coordinate axes through 0."""
        return cls(np.zeros(ambient_dim), np.eye(ambient_dim)[:, :low_dim])

    def project(self, v: np.ndarray) -> np.ndarray:
        return (np.asarray(v) @ self.basis) @ self.basis.T


@dataclass(frozen=True, eq=False)
class PerturbationSet:
    """Perturbed points with the pivot each came from and its embedded distance to x0.

    ``pivot_index`` gives each row's position in the pivot list (0 is the
    explained input); ``pivot_train_index`` maps the remaining pivots back
    to training rows.
    """

    points: np.ndarray
    pivot_index: np.ndarray
    low_dim_distances: Optional[np.ndarray]
    scheme: PerturbationScheme
    seed: Optional[Seed] = None
    pivot_train_index: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.points)

    def save(self, csv_path: Union[str, Path], sidecar_path: Union[str, Path, None] = None) -> None:
        csv_path = Path(csv_path)
        save_csv(PointCloud(self.points, name="perturbations"), csv_path)
        meta = {
            "pivot_index": self.pivot_index.tolist(),
            "D_r": None if self.low_dim_distances is None else [float(v) for v in self.low_dim_distances],
            "scheme": self.scheme.kind,
            "r": self.scheme.radius,
            "seed": None if self.seed is None else [self.seed.master, self.seed.stream],
        }
        sidecar = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
        sidecar.write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, csv_path: Union[str, Path], sidecar_path: Union[str, Path, None] = None) -> "PerturbationSet":
        from .geometry import load_csv

        csv_path = Path(csv_path)
        sidecar = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
        meta = json.loads(sidecar.read_text())
        pts = load_csv(csv_path).points
        d = meta["D_r"]
        seed = Seed(*meta["seed"]) if meta.get("seed") else None
        return cls(pts, np.array(meta["pivot_index"], dtype=np.int64),
                   None if d is None else np.array(d, dtype=float),
                   PerturbationScheme(meta["scheme"], meta["r"]), seed)


def _rescaled(direction: np.ndarray, norm: float) -> Optional[np.ndarray]:
    length = np.linalg.norm(direction)
    if length == 0.0:
        return None
    return direction * (norm / length)


def radius_matched_displacements(
    noise: np.ndarray, kind: str, subspace, rng: np.random.Generator
) -> np.ndarray:
    """Turn raw noise rows into displacements of the same norm for each scheme.

    projection keeps the in-subspace component, orthogonal the complement;
    both are rescaled to the norm of the original draw.  A draw whose
    kept component vanishes is redrawn (at most ``MAX_REDRAWS`` times).
    """
    if kind == GAUSSIAN:
        return noise.copy()
    if subspace is None:
        raise PerturbationError(f"{kind} perturbation needs a subspace")
    out = np.empty_like(noise)
    dim = noise.shape[1]
    for i, v in enumerate(noise):
        target = np.linalg.norm(v)
        if target == 0.0:
            out[i] = 0.0
            continue
        for _ in range(MAX_REDRAWS):
            inside = subspace.project(v)
            kept = inside if kind == PROJECTION else v - inside
            disp = _rescaled(kept, target)
            if disp is not None:
                out[i] = disp
                break
            v = rng.standard_normal(dim)
        else:
            raise PerturbationError(f"{kind} component vanished in {MAX_REDRAWS} draws")
    return out


def lime_mask(rng: np.random.Generator, k: int, dim: int) -> np.ndarray:
    """LIME-style masks: each row switches off a uniformly sized random feature subset."""
    mask = np.zeros((k, dim), dtype=bool)
    for i in range(k):
        count = rng.integers(1, dim + 1)
        mask[i, rng.choice(dim, size=count, replace=False)] = True
    return mask


def perturb_cloud(
    cloud: PointCloud,
    scheme: PerturbationScheme,
    subspace=None,
    seed: Union[Seed, int, np.random.Generator, None] = None,
    mask: Optional[np.ndarray] = None,
    noise: Optional[np.ndarray] = None,
) -> PointCloud:
    """Perturb every point of a cloud once.

    ``subspace`` is a :class:`Subspace` or :class:`LocalSubspace` (anything
    with ``project``).  Passing the same ``noise`` to several schemes gives a
    paired comparison at identical per-point radii.  ``mask`` restricts the
    zero_mask and multiplicative_uniform baselines to a feature subset.
    """
    rng = as_rng(seed)
    pts = cloud.points
    n, dim = pts.shape
    if scheme.kind in (ZERO_MASK, MULTIPLICATIVE_UNIFORM):
        if mask is None:
            mask = lime_mask(rng, n, dim)
        out = pts.copy()
        if scheme.kind == ZERO_MASK:
            out[mask] = 0.0
        else:
            out[mask] *= rng.uniform(0.0, 1.0, size=int(mask.sum()))
        return cloud.with_points(out)
    if scheme.radius == 0:
        return cloud.with_points(pts.copy())
    if noise is None:
        noise = gaussian_noise(rng, n, dim, scheme.radius)
    disp = radius_matched_displacements(np.asarray(noise, dtype=float), scheme.kind, subspace, rng)
    return cloud.with_points(pts + disp)


@dataclass
class EmapSampler:
    """Holds the mapper and fitted local subspaces for a set of pivots."""

    mapper: Mapper
    k_train: int = 200
    r_train: Optional[float] = None  # defaults to the perturbation radius

    def local_subspace(self, x, r: float, seed) -> LocalSubspace:
        r_t = r if self.r_train is None else self.r_train
        return fit_local_subspace(self.mapper, x, self.k_train, r_t, seed)

    def gen_perturbation(
        self, x, k: int, r: float, seed, subspace: Optional[LocalSubspace] = None, reference=None,
        noise: Optional[np.ndarray] = None,
    ):
        """k orthogonal perturbations x + noise - Proj(noise) and their embedded distances.

        Distances are measured to ``reference`` (default: x itself).  Passing
        ``noise`` (k x N) reuses draws shared with another scheme.
        """
        rng = as_rng(seed)
        x = np.asarray(x, dtype=float)
        if r == 0:
            pts = np.repeat(x[None], k, axis=0)
        else:
            if subspace is None:
                subspace = self.local_subspace(x, r, rng)
            if noise is None:
                noise = gaussian_noise(rng, k, len(x), r)
            pts = x + (noise - subspace.project(noise))
        ref = x if reference is None else np.asarray(reference, dtype=float)
        dist = np.linalg.norm(self.mapper.transform(pts) - self.mapper.transform(ref), axis=1)
        return pts, dist


def select_pivots(labels: np.ndarray, p: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of p points per label, uniform without replacement, labels in sorted order."""
    chosen = []
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        if len(idx) < p:
            raise PerturbationError(f"label {lab} has {len(idx)} points, fewer than p={p}")
        if p:
            chosen.append(np.sort(rng.choice(idx, size=p, replace=False)))
    return np.concatenate(chosen) if chosen else np.zeros(0, dtype=np.int64)


def emap_sample(
    train: PointCloud,
    x0,
    p: int,
    k: int,
    low_dim: int,
    r: float,
    seed: Union[Seed, int, None] = 0,
    mapper: Optional[Mapper] = None,
    k_train: int = 200,
    r_train: Optional[float] = None,
) -> PerturbationSet:
    """Orthogonal perturbations around x0 and p training points of each label.

    Returns k (p l + 1) rows: x0's batch first, then each pivot's batch in
    label order.  ``low_dim_distances`` are embedded distances to x0.
    """
    x0 = np.asarray(x0, dtype=float)
    if low_dim >= train.dim:
        raise PerturbationError(f"V={low_dim} must be below N={train.dim}")
    seed = seed if isinstance(seed, Seed) else Seed(int(seed))
    labels = train.labels if train.labels is not None else np.zeros(train.n, dtype=np.int64)
    if mapper is None:
        mapper = fit_mapper(train, low_dim, LINEAR_PCA)
    sampler = EmapSampler(mapper, k_train=k_train, r_train=r_train)

    pivot_idx = select_pivots(labels, p, seed.rng(0))
    pivots = [x0] + [train.points[i] for i in pivot_idx]
    batches, dists, origin = [], [], []
    for j, pivot in enumerate(pivots):
        # one independent stream per pivot so results do not depend on scheduling
        sub = sampler.local_subspace(pivot, r, seed.rng(1, j)) if r > 0 else None
        pts, dist = sampler.gen_perturbation(pivot, k, r, seed.rng(2, j), subspace=sub, reference=x0)
        batches.append(pts)
        dists.append(dist)
        origin.append(np.full(k, j, dtype=np.int64))
    return PerturbationSet(
        np.vstack(batches), np.concatenate(origin), np.concatenate(dists), PerturbationScheme(EMAP, r), seed,
        pivot_train_index=pivot_idx,
    )
