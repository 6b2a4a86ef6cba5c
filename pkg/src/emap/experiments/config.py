"""Experiment configuration: a flat JSON document validated up front."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from ..explain import EXPONENTIAL_AMBIENT, EXPONENTIAL_LOWDIM, UNIFORM
from ..geometry import DEFAULT_SHAPE_PARAMS, SHAPES
from ..manifold import FILE_EMBEDDING, LINEAR_PCA, UMAP_REFERENCE_PARAMS
from ..perturb import EMAP, GAUSSIAN, MULTIPLICATIVE_UNIFORM, ORTHOGONAL, PROJECTION, ZERO_MASK

BOTTLENECK = "bottleneck"
GH = "gh"
EXPLAIN = "explain"
DISCRIMINATE = "discriminate"
KINDS = (BOTTLENECK, GH, EXPLAIN, DISCRIMINATE)

PAPER_PERTURBATIONS = 1000

_ALLOWED_SCHEMES = {
    BOTTLENECK: {GAUSSIAN, PROJECTION, ORTHOGONAL},
    GH: {ORTHOGONAL},
    EXPLAIN: {ZERO_MASK, GAUSSIAN, MULTIPLICATIVE_UNIFORM, EMAP},
    DISCRIMINATE: {ZERO_MASK, GAUSSIAN, MULTIPLICATIVE_UNIFORM, ORTHOGONAL, PROJECTION, EMAP},
}

_DEFAULT_SCHEMES = {
    BOTTLENECK: [GAUSSIAN, PROJECTION, ORTHOGONAL],
    GH: [ORTHOGONAL],
    EXPLAIN: [EMAP, ZERO_MASK],
    DISCRIMINATE: [GAUSSIAN, EMAP],
}

# The synthetic rows used for the bottleneck comparisons: shape, points, data noise,
# perturbation radius, manifold dimension, homology dimension that carries the signal.
SYNTHETIC_TABLE = {
    "line": dict(n_points=100, data_noise=0.1, radius=0.15, low_dim=1, homology=0),
    "circle": dict(n_points=400, data_noise=0.1, radius=0.1, low_dim=2, homology=1),
    "two_intersecting_circles": dict(n_points=400, data_noise=0.01, radius=0.1, low_dim=2, homology=1),
    "two_concentric_circles": dict(n_points=400, data_noise=0.01, radius=0.1, low_dim=2, homology=1),
    "spiral": dict(n_points=1000, data_noise=0.02, radius=0.05, low_dim=2, homology=1),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run needs.

    ``dataset`` is one of
      {"shape": ..., "params": {...}, "n_points": ..., "data_noise": ..., "ambient_dim": 3}
      {"csv": path}                              (labels column optional)
      {"testbed": {"n_features": 20, "n_true": 4, "n_samples": 600, "low_dim": 2}}
      {"random_subspace": {"n_points": 5, "ambient_dim": 3}}   (gh experiments)
    """

    kind: str
    dataset: Dict[str, Any] = field(default_factory=dict)
    schemes: Tuple[str, ...] = ()
    radii: Tuple[float, ...] = (0.1,)
    n_trials: int = 1
    low_dim: int = 2
    p: int = 2
    k: int = PAPER_PERTURBATIONS
    kernel: str = EXPONENTIAL_LOWDIM
    kernel_width: Optional[float] = None
    ridge: float = 1e-3
    seed: int = 0
    out_dir: str = "results"

    # bottleneck
    homology_dims: Tuple[int, ...] = (0, 1)
    subspace: str = "mapper"  # "mapper" (global linear chart) or "true" (first low_dim axes)
    simplex_budget: int = 5_000_000
    max_radius: Optional[float] = None

    # manifold / EMaP
    mapper: str = LINEAR_PCA
    embedding: Optional[str] = None
    k_train: int = 200
    r_train: Optional[float] = None
    umap_params: Dict[str, Any] = field(default_factory=lambda: dict(UMAP_REFERENCE_PARAMS))

    # explain
    model: Optional[str] = None  # model JSON; default trains the L1-logistic testbed
    model_command: Optional[str] = None
    l1_strength: float = 0.01
    epochs: int = 500
    top_k: Tuple[int, ...] = (2, 4, 6, 8)
    top_fraction: float = 0.2
    baseline_value: float = 0.0
    infidelity_radius: float = 1e-3
    infidelity_draws: int = 1000

    # gh: radii are fractions of each cloud's lemma-1 bound unless absolute_radii
    absolute_radii: bool = False

    # discriminate
    train_fraction: float = 0.7
    discriminator_epochs: int = 2000

    @classmethod
    def from_dict(cls, doc: Dict[str, Any], base_dir: Optional[Path] = None) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "kind" not in doc:
            raise ConfigError("config needs 'kind'")
        doc = dict(doc)
        for key in ("schemes", "radii", "homology_dims", "top_k"):
            if key in doc:
                if not isinstance(doc[key], (list, tuple)):
                    raise ConfigError(f"{key} must be a list")
                doc[key] = tuple(doc[key])
        if base_dir is not None:
            doc = _resolve_paths(doc, Path(base_dir))
        if not doc.get("schemes"):
            doc["schemes"] = tuple(_DEFAULT_SCHEMES.get(doc["kind"], ()))
        try:
            cfg = cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc, base_dir=path.parent)

    def replace(self, **changes) -> "ExperimentConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def to_dict(self) -> Dict[str, Any]:
        out = dataclasses.asdict(self)
        for key, val in out.items():
            if isinstance(val, tuple):
                out[key] = list(val)
        return out

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not isinstance(self.n_trials, int) or self.n_trials < 0:
            raise ConfigError("n_trials must be a non-negative integer")
        if self.n_trials == 0 and self.kind != EXPLAIN:
            raise ConfigError("n_trials must be >= 1")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        bad = [s for s in self.schemes if s not in _ALLOWED_SCHEMES[self.kind]]
        if bad:
            raise ConfigError(f"schemes {bad} not allowed for {self.kind}; "
                              f"choose from {sorted(_ALLOWED_SCHEMES[self.kind])}")
        if len(set(self.schemes)) != len(self.schemes):
            raise ConfigError("duplicate schemes")
        for r in self.radii:
            if not isinstance(r, (int, float)) or not math.isfinite(r) or r < 0:
                raise ConfigError(f"radius {r!r} must be finite and >= 0")
            # r = 0 is the identity perturbation, kept for sanity runs
            if r == 0 and self.kind not in (BOTTLENECK, DISCRIMINATE):
                raise ConfigError("radii must be > 0")
        if self.low_dim < 1:
            raise ConfigError("low_dim must be >= 1")
        if self.p < 0 or self.k < 1:
            raise ConfigError("need p >= 0 and k >= 1")
        if self.kernel not in (EXPONENTIAL_LOWDIM, EXPONENTIAL_AMBIENT, UNIFORM):
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.kernel_width is not None and not self.kernel_width > 0:
            raise ConfigError("kernel_width must be positive")
        if self.ridge < 0:
            raise ConfigError("ridge must be >= 0")
        if self.mapper not in (LINEAR_PCA, FILE_EMBEDDING):
            raise ConfigError(f"unknown mapper {self.mapper!r}")
        if self.mapper == FILE_EMBEDDING and not self.embedding:
            raise ConfigError("file_embedding mapper needs 'embedding'")
        for key in ("embedding", "model"):
            val = getattr(self, key)
            if val is not None and not Path(val).is_file():
                raise ConfigError(f"{key} file {val} does not exist")
        if self.model and self.model_command:
            raise ConfigError("give either 'model' or 'model_command', not both")
        if any(d not in (0, 1) for d in self.homology_dims) or not self.homology_dims:
            raise ConfigError("homology_dims must be a non-empty subset of {0, 1}")
        if self.subspace not in ("mapper", "true"):
            raise ConfigError("subspace must be 'mapper' or 'true'")
        if self.max_radius is not None and not self.max_radius > 0:
            raise ConfigError("max_radius must be positive")
        if any(t < 1 for t in self.top_k):
            raise ConfigError("top_k values must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        self._validate_dataset()

    def _validate_dataset(self) -> None:
        ds = self.dataset
        keys = [k for k in ("shape", "csv", "testbed", "random_subspace") if k in ds]
        if len(keys) != 1:
            raise ConfigError("dataset needs exactly one of 'shape', 'csv', 'testbed', 'random_subspace'")
        if "shape" in ds:
            if ds["shape"] not in SHAPES:
                raise ConfigError(f"unknown shape {ds['shape']!r}")
            unknown = set(ds.get("params") or {}) - set(DEFAULT_SHAPE_PARAMS[ds["shape"]])
            if unknown:
                raise ConfigError(f"unknown {ds['shape']} parameters {sorted(unknown)}")
            if int(ds.get("n_points", 0)) < 1:
                raise ConfigError("dataset.n_points must be >= 1")
            if float(ds.get("data_noise", 0.0)) < 0:
                raise ConfigError("dataset.data_noise must be >= 0")
        elif "csv" in ds:
            if not Path(ds["csv"]).is_file():
                raise ConfigError(f"dataset file {ds['csv']} does not exist")
        elif "testbed" in ds:
            tb = testbed_params(self)
            if not 1 <= tb["n_true"] <= tb["n_features"]:
                raise ConfigError("testbed needs 1 <= n_true <= n_features")
            if not 1 <= tb["low_dim"] < tb["n_features"]:
                raise ConfigError("testbed needs 1 <= low_dim < n_features")
        else:
            n = int(ds["random_subspace"].get("n_points", 5))
            if n < 2:
                raise ConfigError("Theorem requires n ≥ 2")
            if n > 9:
                raise ConfigError("the brute-force d_J oracle is capped at 9 points")
            if self.low_dim >= int(ds["random_subspace"].get("ambient_dim", 3)):
                raise ConfigError("low_dim must be below ambient_dim")
        if self.kind == GH and "random_subspace" not in ds:
            raise ConfigError("gh experiments need a 'random_subspace' dataset")
        if self.kind == EXPLAIN and not ("testbed" in ds or "csv" in ds):
            raise ConfigError("explain experiments need a 'testbed' or 'csv' dataset")
        if self.kind == EXPLAIN and "csv" in ds and not (self.model or self.model_command):
            raise ConfigError("explaining a CSV dataset needs 'model' or 'model_command'")


def testbed_params(cfg: ExperimentConfig) -> Dict[str, Any]:
    tb = {"n_features": 20, "n_true": 4, "n_samples": 600, "low_dim": 2}
    tb.update(cfg.dataset.get("testbed") or {})
    return tb


def _resolve_paths(doc: Dict[str, Any], base: Path) -> Dict[str, Any]:
    def fix(p):
        return p if p is None or Path(p).is_absolute() else str(base / p)

    for key in ("embedding", "model"):
        if doc.get(key):
            doc[key] = fix(doc[key])
    if isinstance(doc.get("dataset"), dict) and doc["dataset"].get("csv"):
        doc["dataset"] = dict(doc["dataset"], csv=fix(doc["dataset"]["csv"]))
    return doc


def table_config(shape: str, n_trials: int = 100, seed: int = 0, n_points: Optional[int] = None,
                 **overrides) -> ExperimentConfig:
    """Bottleneck-comparison config for one synthetic row of the reference table."""
    row = SYNTHETIC_TABLE[shape]
    doc = dict(
        kind=BOTTLENECK,
        dataset={"shape": shape, "n_points": n_points or row["n_points"], "data_noise": row["data_noise"]},
        radii=[row["radius"]],
        n_trials=n_trials,
        low_dim=row["low_dim"],
        homology_dims=[row["homology"]],
        seed=seed,
    )
    doc.update(overrides)
    return ExperimentConfig.from_dict(doc)
