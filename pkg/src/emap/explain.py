"""LIME-style local surrogates and explanation quality metrics.

The surrogate regresses the model output on the feature changes
``x0 - x_tilde``.  Explanations report attributions in the usual sign
(positive = pushes the target class up), i.e. the negated coefficients of
that regression; ``Explanation.delta_coefficients`` gives the raw ones.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .geometry import Seed, as_rng, gaussian_noise
from .perturb import (
    GAUSSIAN,
    MULTIPLICATIVE_UNIFORM,
    ZERO_MASK,
    PerturbationScheme,
    PerturbationSet,
    lime_mask,
)

log = logging.getLogger(__name__)

EXPONENTIAL_LOWDIM = "exponential_lowdim"
EXPONENTIAL_AMBIENT = "exponential_ambient"
UNIFORM = "uniform"

DEFAULT_RIDGE = 1e-3
PROB_CLAMP = 1e-12


class ExplainError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: str = EXPONENTIAL_LOWDIM
    width: Optional[float] = None  # None: median distance of the perturbation set

    def __post_init__(self):
        if self.kind not in (EXPONENTIAL_LOWDIM, EXPONENTIAL_AMBIENT, UNIFORM):
            raise ExplainError(f"unknown kernel {self.kind!r}")
        if self.width is not None and not self.width > 0:
            raise ExplainError("kernel width must be positive")


@dataclass(frozen=True, eq=False)
class Explanation:
    feature_weights: np.ndarray
    intercept: float
    kernel_width: float
    scheme: str
    target_class: int

    @property
    def delta_coefficients(self) -> np.ndarray:
        return -self.feature_weights

    def to_json(self) -> str:
        return json.dumps({
            "weights": [float(w) for w in self.feature_weights],
            "intercept": float(self.intercept),
            "sigma": float(self.kernel_width),
            "scheme": self.scheme,
            "target_class": int(self.target_class),
        })


def kernel_weights(distances: np.ndarray, kernel: KernelSpec):
    if kernel.kind == UNIFORM:
        return np.ones(len(distances)), float("inf")
    sigma = kernel.width
    if sigma is None:
        sigma = float(np.median(distances))
        if not sigma > 0:
            sigma = 1.0
    return np.exp(-(distances**2) / sigma**2), sigma


def weighted_ridge(design: np.ndarray, y: np.ndarray, weights: np.ndarray, ridge: float):
    """Solve min sum w_i (y_i - b - design_i . g)^2 + ridge |g|^2 by normal equations.

    Returns (g, b).  The intercept is not penalized.
    """
    k, dim = design.shape
    a = np.hstack([np.ones((k, 1)), design])
    aw = a * weights[:, None]
    normal = a.T @ aw
    normal[1:, 1:] += ridge * np.eye(dim)
    rank = np.linalg.matrix_rank(normal)
    if rank < dim + 1:
        raise ExplainError(f"normal matrix is singular (rank {rank} of {dim + 1}); use a positive ridge")
    coef = np.linalg.solve(normal, aw.T @ y)
    return coef[1:], float(coef[0])


def lime_explain(
    model,
    x0,
    perts: PerturbationSet,
    kernel: KernelSpec = KernelSpec(),
    ridge: float = DEFAULT_RIDGE,
    target_class: Optional[int] = None,
) -> Explanation:
    x0 = np.asarray(x0, dtype=float)
    if len(perts) == 0:
        raise ExplainError("empty perturbation set")
    if target_class is None:
        target_class = int(np.argmax(model.predict(x0[None])[0]))
    deltas = x0 - perts.points
    if kernel.kind == EXPONENTIAL_LOWDIM:
        if perts.low_dim_distances is None:
            raise ExplainError("exponential_lowdim kernel needs low-dimensional distances")
        dist = perts.low_dim_distances
    else:
        dist = np.linalg.norm(deltas, axis=1)
    w, sigma = kernel_weights(dist, kernel)
    y = model.predict(perts.points)[:, target_class]
    g, b = weighted_ridge(deltas, y, w, ridge)
    return Explanation(-g, b, sigma, perts.scheme.kind, target_class)


def baseline_perturbations(
    x0, scheme: str, k: int, radius: float = 0.0, seed: Union[Seed, int, None] = 0
) -> PerturbationSet:
    """LIME's own samplers: zero_mask (LIME zero), gaussian (LIME+), multiplicative_uniform (LIME*).

    Each sample picks a random feature subset of uniformly drawn size; those
    features are zeroed, jittered by Gaussian noise of the given radius, or
    multiplied by U(0, 1).
    """
    x0 = np.asarray(x0, dtype=float)
    rng = as_rng(seed if not isinstance(seed, int) else Seed(seed))
    dim = len(x0)
    mask = lime_mask(rng, k, dim)
    pts = np.repeat(x0[None], k, axis=0)
    if scheme == ZERO_MASK:
        pts[mask] = 0.0
    elif scheme == MULTIPLICATIVE_UNIFORM:
        pts[mask] *= rng.uniform(0.0, 1.0, size=int(mask.sum()))
    elif scheme == GAUSSIAN:
        noise = gaussian_noise(rng, k, dim, radius)
        pts[mask] += noise[mask]
    else:
        raise ExplainError(f"{scheme!r} is not a LIME baseline scheme")
    return PerturbationSet(pts, np.zeros(k, dtype=np.int64), None, PerturbationScheme(scheme, radius),
                           seed if isinstance(seed, Seed) else None)


def _log_odds(p: float):
    clamped = min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)
    return np.log(clamped / (1.0 - clamped)), clamped != p


@dataclass(frozen=True)
class LogOddsResult:
    score: float
    erased: np.ndarray
    clamped: bool


def log_odds_score(model, x0, expl: Explanation, top_fraction: float = 0.2, baseline_value: float = 0.0,
                   detail: bool = False):
    """Drop in target-class log-odds after erasing the most supportive features.

    Only strictly positive weights are candidates; the top ``top_fraction``
    of all features (rounded up) is erased, ties going to the lower index.
    """
    if not 0 < top_fraction <= 1:
        raise ExplainError("top_fraction must be in (0, 1]")
    x0 = np.asarray(x0, dtype=float)
    w = expl.feature_weights
    budget = int(np.ceil(top_fraction * len(w)))
    positive = np.flatnonzero(w > 0)
    order = positive[np.lexsort((positive, -w[positive]))]
    erased = np.sort(order[:budget])
    modified = x0.copy()
    modified[erased] = baseline_value
    probs = model.predict(np.vstack([x0, modified]))[:, expl.target_class]
    before, c1 = _log_odds(float(probs[0]))
    after, c2 = _log_odds(float(probs[1]))
    if c1 or c2:
        log.warning("probability clamped to [%g, 1 - %g] for log-odds", PROB_CLAMP, PROB_CLAMP)
    result = LogOddsResult(float(before - after), erased, c1 or c2)
    return result if detail else result.score


@dataclass(frozen=True)
class InfidelityResult:
    value: float
    stderr: float
    n_draws: int


def infidelity_score(model, x0, expl: Explanation, noise_radius: float = 1e-3, n_draws: int = 1000,
                     seed: Union[Seed, int, None] = 0, detail: bool = False, noise_fn=None):
    """Monte-Carlo estimate of E[(I . g - (f(x0) - f(x0 - I)))^2].

    I defaults to isotropic Gaussian noise of the given radius; ``noise_fn``
    (rng, n_draws, dim) -> array overrides it.
    """
    if n_draws < 1:
        raise ExplainError("n_draws must be >= 1")
    x0 = np.asarray(x0, dtype=float)
    rng = as_rng(seed if not isinstance(seed, int) else Seed(seed))
    dim = len(x0)
    draws = noise_fn(rng, n_draws, dim) if noise_fn else gaussian_noise(rng, n_draws, dim, noise_radius)
    f0 = model.predict(x0[None])[0, expl.target_class]
    fi = model.predict(x0 - draws)[:, expl.target_class]
    sq = (draws @ expl.feature_weights - (f0 - fi)) ** 2
    stderr = float(sq.std(ddof=1) / np.sqrt(n_draws)) if n_draws > 1 else float("nan")
    result = InfidelityResult(float(sq.mean()), stderr, n_draws)
    return result if detail else result.value


def top_features(weights: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest |weight|, ties to the lower index."""
    w = np.abs(np.asarray(weights))
    order = np.lexsort((np.arange(len(w)), -w))
    return order[:k]


def precision_recall(expl: Union[Explanation, np.ndarray], ground_truth: Sequence[int], top_k: int):
    if top_k < 1:
        raise ExplainError("top_k must be >= 1")
    truth = set(int(i) for i in ground_truth)
    if not truth:
        raise ExplainError("empty ground-truth feature set")
    w = expl.feature_weights if isinstance(expl, Explanation) else np.asarray(expl)
    chosen = set(int(i) for i in top_features(w, top_k))
    hit = len(chosen & truth)
    return {"precision": hit / top_k, "recall": hit / len(truth)}
