"""Point clouds, seeding, distances and the synthetic shape generators."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

SHAPES = ("line", "circle", "two_intersecting_circles", "two_concentric_circles", "spiral")

# Per-shape defaults matching the synthetic benchmark table.
DEFAULT_SHAPE_PARAMS = {
    "line": {"length": 10.0},
    "circle": {"radius": 1.0},
    "two_intersecting_circles": {"radius": 1.0},
    "two_concentric_circles": {"radius": 1.0, "inner_ratio": 0.5},
    "spiral": {"r_min": 0.0, "r_max": 2.0, "turns": 2.0},
}


class CloudError(ValueError):
    pass


@dataclass(frozen=True)
class Seed:
    """A (master, stream) pair; each stream is an independent random sequence."""

    master: int
    stream: int = 0

    def __post_init__(self):
        for v in (self.master, self.stream):
            if not 0 <= int(v) < 2**64:
                raise ValueError(f"seed components must be unsigned 64-bit, got {v}")

    def rng(self, *substream: int) -> np.random.Generator:
        # SeedSequence + PCG64 gives the same stream on every platform.
        entropy = [int(self.master), int(self.stream), *map(int, substream)]
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def child(self, stream: int) -> "Seed":
        return Seed(self.master, stream)


def as_rng(seed: Union[Seed, int, np.random.Generator, None]) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, Seed):
        return seed.rng()
    return Seed(0 if seed is None else int(seed)).rng()


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise CloudError(f"points must be a non-empty n x N matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise CloudError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.array(self.labels, dtype=np.int64).reshape(-1)
            if lab.shape[0] != pts.shape[0]:
                raise CloudError(f"labels length {lab.shape[0]} != number of points {pts.shape[0]}")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n

    def with_points(self, points, name: Optional[str] = None) -> "PointCloud":
        return PointCloud(points, self.labels, self.name if name is None else name)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        same_labels = (self.labels is None and other.labels is None) or (
            self.labels is not None and other.labels is not None
            and np.array_equal(self.labels, other.labels)
        )
        return np.array_equal(self.points, other.points) and same_labels


def pairwise_distances(cloud: Union[PointCloud, np.ndarray]) -> np.ndarray:
    """Euclidean distance matrix with an exact zero diagonal and exact symmetry."""
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    # diff[i, j] = -diff[j, i] so d is already bitwise symmetric; keep the diagonal exact.
    np.fill_diagonal(d, 0.0)
    return d


def gaussian_noise(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    """Isotropic noise with covariance (radius**2 / dim) I, so E|noise|^2 = radius**2."""
    return rng.standard_normal((n, dim)) * (radius / np.sqrt(dim))


def expected_noise_norm(radius: float, dim: int) -> float:
    """E|noise| for :func:`gaussian_noise`; a chi mean scaled by radius / sqrt(dim)."""
    from scipy.special import gammaln

    chi_mean = np.sqrt(2.0) * np.exp(gammaln((dim + 1) / 2) - gammaln(dim / 2))
    return float(radius / np.sqrt(dim) * chi_mean)


def _shape_points(shape: str, params: dict, n: int, rng: np.random.Generator):
    t = rng.uniform(0.0, 1.0, n)
    labels = np.zeros(n, dtype=np.int64)
    if shape == "line":
        length = params["length"]
        xy = np.column_stack([length * t, np.zeros(n)])
    elif shape == "circle":
        a = 2 * np.pi * t
        xy = params["radius"] * np.column_stack([np.cos(a), np.sin(a)])
    elif shape in ("two_intersecting_circles", "two_concentric_circles"):
        labels = (rng.uniform(0.0, 1.0, n) < 0.5).astype(np.int64)
        a = 2 * np.pi * t
        unit = np.column_stack([np.cos(a), np.sin(a)])
        R = params["radius"]
        if shape == "two_intersecting_circles":
            # Second circle centred one radius to the right: the two cross twice.
            centers = np.array([[0.0, 0.0], [R, 0.0]])
            xy = R * unit + centers[labels]
        else:
            radii = np.array([R, R * params["inner_ratio"]])
            xy = radii[labels][:, None] * unit
    elif shape == "spiral":
        r0, r1, turns = params["r_min"], params["r_max"], params["turns"]
        rho = r0 + (r1 - r0) * t
        a = 2 * np.pi * turns * t
        xy = rho[:, None] * np.column_stack([np.cos(a), np.sin(a)])
    else:
        raise CloudError(f"unknown shape {shape!r}; expected one of {SHAPES}")
    return xy, labels


def shape_residual(shape: str, params: dict, points: np.ndarray) -> np.ndarray:
    """Distance-like residual of each point from the noise-free parametric shape."""
    p = {**DEFAULT_SHAPE_PARAMS.get(shape, {}), **(params or {})}
    x, y = points[:, 0], points[:, 1]
    extra = np.linalg.norm(points[:, 2:], axis=1) if points.shape[1] > 2 else 0.0
    if shape == "line":
        off = np.abs(y) + np.clip(-x, 0, None) + np.clip(x - p["length"], 0, None)
    elif shape == "circle":
        off = np.abs(np.hypot(x, y) - p["radius"])
    elif shape == "two_intersecting_circles":
        R = p["radius"]
        off = np.minimum(np.abs(np.hypot(x, y) - R), np.abs(np.hypot(x - R, y) - R))
    elif shape == "two_concentric_circles":
        rho = np.hypot(x, y)
        off = np.minimum(np.abs(rho - p["radius"]), np.abs(rho - p["radius"] * p["inner_ratio"]))
    elif shape == "spiral":
        r0, r1, turns = p["r_min"], p["r_max"], p["turns"]
        # invert the radius along the spiral and compare the angle
        rho = np.hypot(x, y)
        t = (rho - r0) / (r1 - r0)
        a = 2 * np.pi * turns * t
        off = np.hypot(x - rho * np.cos(a), y - rho * np.sin(a)) + np.clip(-t, 0, None) + np.clip(t - 1, 0, None)
    else:
        raise CloudError(f"unknown shape {shape!r}")
    return off + extra


def generate_synthetic(
    shape: str,
    params: Optional[dict] = None,
    n_points: int = 100,
    data_noise: float = 0.0,
    seed: Union[Seed, int, np.random.Generator, None] = None,
    ambient_dim: int = 3,
) -> PointCloud:
    """Sample a planar shape embedded in the first two coordinates of R^ambient_dim.

    Points are drawn uniformly in the shape parameter and then displaced by
    isotropic Gaussian noise whose expected squared norm is ``data_noise**2``.
    The two-circle shapes label points by circle; all others get label 0.
    """
    if shape not in SHAPES:
        raise CloudError(f"unknown shape {shape!r}; expected one of {SHAPES}")
    if n_points < 1:
        raise CloudError("n_points must be >= 1")
    if data_noise < 0:
        raise CloudError("data_noise must be >= 0")
    if ambient_dim < 2:
        raise CloudError("ambient_dim must be >= 2")
    p = {**DEFAULT_SHAPE_PARAMS[shape], **(params or {})}
    for key, val in p.items():
        if key == "r_min":
            if not (0 <= val < p["r_max"]):
                raise CloudError(f"spiral needs 0 <= r_min < r_max, got {val}")
        elif val <= 0:
            raise CloudError(f"shape parameter {key!r} must be positive, got {val}")

    rng = as_rng(seed)
    xy, labels = _shape_points(shape, p, n_points, rng)
    pts = np.zeros((n_points, ambient_dim))
    pts[:, :2] = xy
    if data_noise > 0:
        pts += gaussian_noise(rng, n_points, ambient_dim, data_noise)
    return PointCloud(pts, labels, name=shape)


def save_csv(cloud: PointCloud, path: Union[str, Path]) -> None:
    header = [f"x{i}" for i in range(cloud.dim)]
    if cloud.labels is not None:
        header.append("label")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, row in enumerate(cloud.points):
            cells = [format(float(v), ".17g") for v in row]
            if cloud.labels is not None:
                cells.append(str(int(cloud.labels[i])))
            w.writerow(cells)


def load_csv(path: Union[str, Path], name: Optional[str] = None) -> PointCloud:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CloudError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    if not body:
        raise CloudError(f"{path}: empty cloud")
    has_label = header[-1].strip() == "label"
    width = len(header)
    data = []
    for lineno, r in enumerate(body, start=2):
        if len(r) != width:
            raise CloudError(f"{path}:{lineno}: ragged row ({len(r)} cells, header has {width})")
        try:
            data.append([float(c) for c in r])
        except ValueError as exc:
            raise CloudError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    arr = np.array(data, dtype=float)
    labels = None
    if has_label:
        labels = arr[:, -1]
        if not np.all(labels == np.round(labels)):
            raise CloudError(f"{path}: label column must hold integers")
        arr = arr[:, :-1]
    return PointCloud(arr, labels, name=name if name is not None else Path(path).stem)
