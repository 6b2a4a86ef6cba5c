"""Mappers onto a low-dimensional representation and local affine subspaces."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointCloud, Seed, as_rng, gaussian_noise

LINEAR_PCA = "linear_pca"
FILE_EMBEDDING = "file_embedding"

# Settings used for the UMAP embeddings in the original experiments.  They
# are recorded for reference; UMAP coordinates enter through FILE_EMBEDDING.
UMAP_REFERENCE_PARAMS = {"n_components": 2, "min_dist": 0.1}

IDW_EPS = 1e-12


class ManifoldError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mapper:
    """A fitted embedding R^N -> R^V.

    linear_pca keeps ``mean`` and an N x V orthonormal ``basis``.
    file_embedding keeps the training points with their low-dimensional
    rows and interpolates unseen points from the ``k_nn`` nearest ones.
    """

    kind: str
    ambient_dim: int
    low_dim: int
    mean: Optional[np.ndarray] = None
    basis: Optional[np.ndarray] = None
    train_points: Optional[np.ndarray] = None
    train_embedding: Optional[np.ndarray] = None
    k_nn: int = 5
    _tree: Optional[cKDTree] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not 1 <= self.low_dim < self.ambient_dim:
            raise ManifoldError(f"need 1 <= V < N, got V={self.low_dim}, N={self.ambient_dim}")
        if self.kind == FILE_EMBEDDING and self._tree is None:
            object.__setattr__(self, "_tree", cKDTree(self.train_points))

    def transform(self, x) -> np.ndarray:
        """Embed one point (shape N) or a batch (shape k x N)."""
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        batch = np.atleast_2d(arr)
        if batch.shape[1] != self.ambient_dim:
            raise ManifoldError(f"expected dimension {self.ambient_dim}, got {batch.shape[1]}")
        if self.kind == LINEAR_PCA:
            out = (batch - self.mean) @ self.basis
        else:
            out = self._interpolate(batch)
        return out[0] if single else out

    def _interpolate(self, batch: np.ndarray) -> np.ndarray:
        k = min(self.k_nn, len(self.train_points))
        dist, idx = self._tree.query(batch, k=k)
        dist = dist.reshape(len(batch), k)
        idx = idx.reshape(len(batch), k)
        w = 1.0 / (dist + IDW_EPS)
        out = np.einsum("bk,bkv->bv", w, self.train_embedding[idx]) / w.sum(axis=1, keepdims=True)
        # stored points reproduce their own rows exactly
        exact = dist[:, 0] == 0
        out[exact] = self.train_embedding[idx[exact, 0]]
        return out

    def to_json(self, embedding_path: Optional[str] = None) -> str:
        doc = {"kind": self.kind, "ambient_dim": self.ambient_dim, "low_dim": self.low_dim}
        if self.kind == LINEAR_PCA:
            doc.update(mean=self.mean.tolist(), basis=self.basis.tolist())
        else:
            doc.update(k_nn=self.k_nn, embedding=embedding_path)
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str, train: Optional[PointCloud] = None) -> "Mapper":
        doc = json.loads(text)
        if doc["kind"] == LINEAR_PCA:
            return cls(LINEAR_PCA, doc["ambient_dim"], doc["low_dim"],
                       mean=np.array(doc["mean"]), basis=np.array(doc["basis"]))
        if train is None or doc.get("embedding") is None:
            raise ManifoldError("file_embedding mappers need the training cloud and embedding file")
        return fit_mapper(train, doc["low_dim"], FILE_EMBEDDING, embedding=doc["embedding"], k_nn=doc["k_nn"])


def load_embedding(path: Union[str, Path]) -> np.ndarray:
    """One row of V floats per training point; an optional header row is skipped."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                if rows:
                    raise ManifoldError(f"{path}: non-numeric row {line!r}") from None
    return np.array(rows, dtype=float)


def fit_mapper(
    train: Union[PointCloud, np.ndarray],
    low_dim: int,
    kind: str = LINEAR_PCA,
    embedding: Union[str, Path, np.ndarray, None] = None,
    k_nn: int = 5,
) -> Mapper:
    pts = train.points if isinstance(train, PointCloud) else np.atleast_2d(np.asarray(train, dtype=float))
    n, dim = pts.shape
    if low_dim >= dim:
        raise ManifoldError(f"low_dim V={low_dim} must be below the ambient dimension N={dim}")
    if low_dim >= n:
        raise ManifoldError(f"low_dim V={low_dim} must be below the number of training points n={n}")
    if kind == LINEAR_PCA:
        mean = pts.mean(axis=0)
        # full_matrices so rank-deficient data still yields V orthonormal columns
        _, _, vt = np.linalg.svd(pts - mean, full_matrices=True)
        return Mapper(LINEAR_PCA, dim, low_dim, mean=mean, basis=vt[:low_dim].T.copy())
    if kind == FILE_EMBEDDING:
        if embedding is None:
            raise ManifoldError("file_embedding needs an embedding file or array")
        emb = embedding if isinstance(embedding, np.ndarray) else load_embedding(embedding)
        emb = np.atleast_2d(np.asarray(emb, dtype=float))
        if emb.shape[0] != n:
            raise ManifoldError(f"embedding has {emb.shape[0]} rows for {n} training points")
        if emb.shape[1] != low_dim:
            raise ManifoldError(f"embedding has {emb.shape[1]} columns, expected V={low_dim}")
        return Mapper(FILE_EMBEDDING, dim, low_dim, train_points=pts.copy(), train_embedding=emb, k_nn=k_nn)
    raise ManifoldError(f"unknown mapper kind {kind!r}")


@dataclass(frozen=True, eq=False)
class LocalSubspace:
    """Affine approximation of the manifold near one point.

    ``basis`` is N x V with orthonormal columns.  ``fit_residual`` is the
    mean norm of the least-squares residual over the training draws;
    ``tangent_residual`` is the part of that residual lying inside the
    fitted subspace (zero when the mapper is an exact affine chart).
    """

    base_point: np.ndarray
    basis: np.ndarray
    fit_residual: float
    tangent_residual: float = 0.0
    linear_map: Optional[np.ndarray] = None  # raw least-squares G before orthonormalization
    low_mean: Optional[np.ndarray] = None

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def project(self, v: np.ndarray) -> np.ndarray:
        """Orthogonal projection of direction vector(s) onto the subspace."""
        return (np.asarray(v) @ self.basis) @ self.basis.T

    def reconstruct(self, low: np.ndarray) -> np.ndarray:
        """Affine inverse of the mapper on this patch: base + G (low - mean_low)."""
        return self.base_point + (np.atleast_2d(low) - self.low_mean) @ self.linear_map.T


def isotropic_design(rng: np.random.Generator, k: int, dim: int, radius: float) -> np.ndarray:
    """k Gaussian draws, centred and whitened so their sample covariance is exactly (radius^2/dim) I.

    Exact whitening needs k > dim; with fewer draws plain centred Gaussian
    draws are returned.
    """
    raw = gaussian_noise(rng, k, dim, radius)
    raw -= raw.mean(axis=0)
    if k - 1 < dim:
        return raw
    u, _, vt = np.linalg.svd(raw, full_matrices=False)
    return (u @ vt) * (radius * np.sqrt((k - 1) / dim))


def fit_local_subspace(
    mapper: Mapper,
    x,
    k_train: int = 200,
    r_train: float = 0.1,
    seed: Union[Seed, int, np.random.Generator, None] = None,
    draws: Optional[np.ndarray] = None,
) -> LocalSubspace:
    """Least-squares local chart G with z ~ base + G (omega(z) - mean) around x.

    Training points are x plus ``k_train`` noise draws of radius ``r_train``
    (or the caller's ``draws``).  Both the points and their embeddings are
    centred before solving, so the fitted map is affine.
    """
    x = np.asarray(x, dtype=float)
    V = mapper.low_dim
    if draws is None:
        if k_train < V + 1:
            raise ManifoldError(f"k_train={k_train} must be at least V + 1 = {V + 1}")
        if not r_train > 0:
            raise ManifoldError("r_train must be positive")
        draws = isotropic_design(as_rng(seed), k_train, mapper.ambient_dim, r_train)
    z = x + np.atleast_2d(draws)
    low = mapper.transform(z)
    base, low_mean = z.mean(axis=0), low.mean(axis=0)
    zc, lc = z - base, low - low_mean
    if len(z) < V + 1 or np.linalg.matrix_rank(lc) < V:
        raise ManifoldError(
            f"embedded training sample has rank {np.linalg.matrix_rank(lc)} < V = {V}; "
            "use more draws or a larger r_train"
        )
    gt, *_ = np.linalg.lstsq(lc, zc, rcond=None)
    G = gt.T  # N x V
    q, _ = np.linalg.qr(G)
    resid = zc - lc @ gt
    fit_residual = float(np.linalg.norm(resid, axis=1).mean())
    tangent_residual = float(np.linalg.norm(resid @ q, axis=1).mean())
    return LocalSubspace(base, q, fit_residual, tangent_residual, linear_map=G, low_mean=low_mean)


@dataclass(frozen=True)
class Lemma2Gap:
    lhs: np.ndarray  # per-draw reconstruction gap
    bound: np.ndarray  # per-draw F_B + |r_perp|
    objective: float  # F_B: summed residual norm of the fit on the draws

    @property
    def max_lhs(self) -> float:
        return float(self.lhs.max())

    @property
    def holds(self) -> bool:
        return bool(np.all(self.lhs <= self.bound))


def lemma2_gap(mapper: Mapper, x, draws: np.ndarray, subspace_origin, subspace_basis) -> Lemma2Gap:
    """Compare the chart fitted on noisy points with the chart fitted on their projections.

    ``subspace_origin`` / ``subspace_basis`` describe the true affine subspace
    containing the data; without it the ideal chart is undefined.
    """
    if subspace_origin is None or subspace_basis is None:
        raise ManifoldError("the true subspace (origin and basis) must be supplied")
    x = np.asarray(x, dtype=float)
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    q, _ = np.linalg.qr(np.asarray(subspace_basis, dtype=float))
    origin = np.asarray(subspace_origin, dtype=float)

    def proj(p):
        return origin + ((p - origin) @ q) @ q.T

    noisy = x + draws
    clean = proj(noisy)
    fitted = fit_local_subspace(mapper, x, draws=draws)
    ideal = fit_local_subspace(mapper, np.zeros_like(x), draws=clean)

    rec_noisy = fitted.reconstruct(mapper.transform(noisy))
    rec_clean = ideal.reconstruct(mapper.transform(clean))
    objective = float(np.linalg.norm(rec_noisy - noisy, axis=1).sum())
    lhs = np.linalg.norm(rec_noisy - rec_clean, axis=1)
    r_perp = np.linalg.norm(draws - draws @ q @ q.T, axis=1)
    return Lemma2Gap(lhs, objective + r_perp, objective)
