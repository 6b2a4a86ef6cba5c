"""Monte-Carlo harness: trial loops, worker pool and result files.

Every trial derives all of its randomness from ``Seed(master, trial)``, so a
run's rows do not depend on how trials are spread over workers.  Within a
trial, schemes that can share noise draw it from the same substream; the
substream is written to each row as ``noise_seed``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import multiprocessing
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..explain import (
    EXPONENTIAL_AMBIENT,
    UNIFORM,
    KernelSpec,
    baseline_perturbations,
    infidelity_score,
    lime_explain,
    log_odds_score,
    precision_recall,
)
from ..geometry import PointCloud, Seed, gaussian_noise, generate_synthetic, load_csv
from ..gh import GHMode, discrete_gh, is_generic, lemma1_radius_bound, theorem1_witness
from ..manifold import LINEAR_PCA, fit_mapper
from ..models import (
    LogisticModel,
    load_model,
    sparse_testbed,
    subprocess_model,
    train_l1_logistic,
)
from ..perturb import (
    EMAP,
    GAUSSIAN,
    MULTIPLICATIVE_UNIFORM,
    ORTHOGONAL,
    PROJECTION,
    SCHEMES,
    ZERO_MASK,
    EmapSampler,
    PerturbationScheme,
    Subspace,
    emap_sample,
    lime_mask,
    perturb_cloud,
    radius_matched_displacements,
)
from ..tda import FiltrationParams, SimplexBudgetExceeded, bottleneck_distance, rips_persistence
from ..tda.rips import FULL_FILTRATION_MAX_POINTS
from .config import (
    BOTTLENECK,
    DISCRIMINATE,
    EXPLAIN,
    GH,
    PAPER_PERTURBATIONS,
    ConfigError,
    ExperimentConfig,
    testbed_params,
)

log = logging.getLogger(__name__)

# Stream reserved for dataset-level randomness (testbed, input order); trial
# streams are the trial indices themselves.
DATASET_STREAM = 2**63
MAX_GENERIC_REDRAWS = 100
MIN_POOL_PER_CLASS = 40
DISCRIMINATOR_NOTE = "in-repo logistic regression (no L1) on standardized coordinates"

# Fixed scheme positions, so adding a scheme to a config leaves the others' streams alone.
_SCHEME_INDEX = {s: i for i, s in enumerate(SCHEMES + (EMAP,))}


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: str
    scheme: str
    radius: float
    metrics: Dict[str, float]
    noise_seed: str = ""
    status: str = "ok"

    def __post_init__(self):
        bad = {k: v for k, v in self.metrics.items() if not math.isfinite(v)}
        if bad:
            raise ValueError(f"trial {self.trial}, {self.scheme}: non-finite metrics {bad}")


@dataclass
class RunResult:
    config: ExperimentConfig
    records: List[TrialRecord]
    summary: List[Tuple[str, float, str, str, float]]
    skipped: List[Dict[str, Any]] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)
    counters: Dict[str, int] = field(default_factory=dict)


class RunFailure(RuntimeError):
    pass


def _seed_text(master: int, *parts: int) -> str:
    return ":".join(str(int(v)) for v in (master, *parts))


# ---------------------------------------------------------------- datasets


def _dataset_seed(cfg: ExperimentConfig) -> Seed:
    return Seed(cfg.seed, DATASET_STREAM)


def _load_or_generate(cfg: ExperimentConfig, ctx: Dict[str, Any], seed: Seed) -> PointCloud:
    ds = cfg.dataset
    if "csv" in ds:
        return ctx["cloud"]
    return generate_synthetic(ds["shape"], ds.get("params"), int(ds["n_points"]), float(ds.get("data_noise", 0.0)),
                              seed.rng(0), ambient_dim=int(ds.get("ambient_dim", 3)))


def _mapper_for(cfg: ExperimentConfig, cloud: PointCloud):
    return fit_mapper(cloud, cfg.low_dim, cfg.mapper, embedding=cfg.embedding)


def _global_subspace(cfg: ExperimentConfig, cloud: PointCloud):
    if cfg.subspace == "true":
        return Subspace.coordinate(cloud.dim, cfg.low_dim)
    mapper = _mapper_for(cfg, cloud)
    if mapper.kind == LINEAR_PCA:
        return Subspace(mapper.mean, mapper.basis)
    return None  # file embeddings get one local subspace per point


def _pointwise_displacements(cfg, cloud, noise, kind, r: float, seed: Seed, stream: Tuple[int, ...]):
    """Projection/orthogonal displacements from per-point local subspaces."""
    sampler = EmapSampler(_mapper_for(cfg, cloud), k_train=cfg.k_train, r_train=cfg.r_train)
    out = np.empty_like(noise)
    for i, x in enumerate(cloud.points):
        sub = sampler.local_subspace(x, r, seed.rng(5, i))
        out[i] = radius_matched_displacements(noise[i:i + 1], kind, sub, seed.rng(*stream, i))[0]
    return out


# ---------------------------------------------------------------- bottleneck


def _prepare_bottleneck(cfg: ExperimentConfig) -> Dict[str, Any]:
    ctx: Dict[str, Any] = {}
    if "csv" in cfg.dataset:
        ctx["cloud"] = load_csv(cfg.dataset["csv"])
        n = ctx["cloud"].n
    elif "shape" in cfg.dataset:
        n = int(cfg.dataset["n_points"])
    else:
        raise ConfigError("bottleneck experiments need a 'shape' or 'csv' dataset")
    if n > FULL_FILTRATION_MAX_POINTS and cfg.max_radius is None:
        raise ConfigError(f"{n} points: set max_radius (full filtrations are limited to "
                          f"{FULL_FILTRATION_MAX_POINTS} points)")
    if cfg.subspace == "true" and "csv" in cfg.dataset:
        raise ConfigError("subspace 'true' is only defined for synthetic shapes")
    return ctx


def _normalized(raw: float, r: float) -> float:
    if r > 0:
        return raw / r
    if raw == 0.0:
        return 0.0
    raise RunFailure(f"bottleneck distance {raw} at radius 0")


def _bottleneck_trial(cfg: ExperimentConfig, ctx: Dict[str, Any], t: int):
    seed = Seed(cfg.seed, t)
    cloud = _load_or_generate(cfg, ctx, seed)
    params = FiltrationParams(max_dimension=max(cfg.homology_dims),
                              max_radius=np.inf if cfg.max_radius is None else cfg.max_radius,
                              simplex_budget=cfg.simplex_budget)
    subspace = None
    if any(s != GAUSSIAN for s in cfg.schemes):
        subspace = _global_subspace(cfg, cloud)
    records = []
    try:
        base = rips_persistence(cloud, params)
        for ri, r in enumerate(cfg.radii):
            noise = gaussian_noise(seed.rng(1, ri), cloud.n, cloud.dim, r) if r > 0 else None
            for scheme in cfg.schemes:
                si = _SCHEME_INDEX[scheme]
                if r == 0:
                    pert = cloud
                elif scheme != GAUSSIAN and subspace is None:
                    disp = _pointwise_displacements(cfg, cloud, noise, scheme, r, seed, (2, ri, si))
                    pert = cloud.with_points(cloud.points + disp)
                else:
                    pert = perturb_cloud(cloud, PerturbationScheme(scheme, r), subspace,
                                         seed=seed.rng(2, ri, si), noise=noise)
                diagrams = rips_persistence(pert, params)
                metrics = {}
                for d in cfg.homology_dims:
                    raw = bottleneck_distance(base[d], diagrams[d])
                    metrics[f"H{d}"] = _normalized(raw, r)
                    metrics[f"H{d}_raw"] = raw
                records.append(TrialRecord(t, _seed_text(cfg.seed, t), scheme, float(r), metrics,
                                           noise_seed=_seed_text(cfg.seed, t, 1, ri)))
    except SimplexBudgetExceeded as exc:
        return [], {"trial": t, "reason": str(exc)}, {}
    return records, None, {}


def _bottleneck_extra(cfg: ExperimentConfig, records: List[TrialRecord]):
    rows = []
    if not {ORTHOGONAL, PROJECTION} <= set(cfg.schemes):
        return rows
    for r in cfg.radii:
        by = {}
        for rec in records:
            if rec.radius == r and rec.scheme in (ORTHOGONAL, PROJECTION):
                by.setdefault(rec.trial, {})[rec.scheme] = rec.metrics
        pairs = [v for _, v in sorted(by.items()) if len(v) == 2]
        for d in cfg.homology_dims:
            key = f"H{d}"
            wins = sum(1 for v in pairs if v[ORTHOGONAL][key] < v[PROJECTION][key])
            rows.append(("orthogonal_vs_projection", float(r), key, "wins", float(wins)))
            rows.append(("orthogonal_vs_projection", float(r), key, "n", float(len(pairs))))
            rows.append(("orthogonal_vs_projection", float(r), key, "win_rate",
                         wins / len(pairs) if pairs else 0.0))
    return rows


def run_bottleneck_comparison(cfg: ExperimentConfig, workers: int = 1) -> RunResult:
    _expect(cfg, BOTTLENECK)
    return _run(cfg, _prepare_bottleneck(cfg), _bottleneck_trial, workers, _bottleneck_extra)


# ---------------------------------------------------------------- Gromov-Hausdorff


def _random_subspace_cloud(rng: np.random.Generator, n: int, ambient: int, low: int) -> Tuple[PointCloud, Subspace]:
    origin = rng.normal(size=ambient)
    basis, _ = np.linalg.qr(rng.normal(size=(ambient, low)))
    coef = rng.uniform(-1.0, 1.0, size=(n, low))
    return PointCloud(origin + coef @ basis.T), Subspace(origin, basis)


def _exact_radius_noise(rng: np.random.Generator, n: int, dim: int, r: float) -> np.ndarray:
    g = rng.standard_normal((n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True) * r


def _gh_trial(cfg: ExperimentConfig, ctx: Dict[str, Any], t: int):
    seed = Seed(cfg.seed, t)
    spec = cfg.dataset["random_subspace"]
    n, ambient = int(spec.get("n_points", 5)), int(spec.get("ambient_dim", 3))
    rng = seed.rng(0)
    for redraws in range(MAX_GENERIC_REDRAWS):
        cloud, sub = _random_subspace_cloud(rng, n, ambient, cfg.low_dim)
        if is_generic(cloud):
            break
    else:
        raise RunFailure(f"trial {t}: no generic cloud in {MAX_GENERIC_REDRAWS} draws")
    bound = lemma1_radius_bound(cloud)
    diameter = float(np.max(np.linalg.norm(cloud.points[:, None] - cloud.points[None], axis=2)))
    slack = 1e-12 * max(diameter, 1.0)
    records = []
    for ri, value in enumerate(cfg.radii):
        r = float(value) if cfg.absolute_radii else float(value) * bound
        noise = _exact_radius_noise(seed.rng(1, ri), n, ambient, r)
        disp = radius_matched_displacements(noise, ORTHOGONAL, sub, seed.rng(2, ri))
        orth = cloud.with_points(cloud.points + disp)
        brute = discrete_gh(cloud, orth, GHMode.BRUTE_FORCE).distance
        fast = discrete_gh(cloud, orth, GHMode.IDENTITY_FAST_PATH).distance
        witness = discrete_gh(cloud, theorem1_witness(cloud, r, check_regime=False), GHMode.BRUTE_FORCE).distance
        in_regime = r < bound
        if not in_regime:
            status = "out_of_regime"
        else:
            # the witness distance equals r in exact arithmetic; allow rounding in its evaluation
            ok = brute < r and witness >= r - slack and fast == brute
            status = "pass" if ok else "fail"
        metrics = {
            "bound": bound, "r": r, "dj_orthogonal": brute, "dj_orthogonal_fast": fast,
            "dj_witness": witness, "fast_path_exact": float(fast == brute),
            "in_regime": float(in_regime), "redraws": float(redraws),
        }
        records.append(TrialRecord(t, _seed_text(cfg.seed, t), ORTHOGONAL, float(value), metrics,
                                   noise_seed=_seed_text(cfg.seed, t, 1, ri), status=status))
    return records, None, {"redraws": redraws}


def _gh_extra(cfg: ExperimentConfig, records: List[TrialRecord]):
    rows = []
    for value in cfg.radii:
        recs = [r for r in records if r.radius == value]
        inside = [r for r in recs if r.status != "out_of_regime"]
        passed = sum(1 for r in inside if r.status == "pass")
        rows.append((ORTHOGONAL, float(value), "theorem1", "in_regime", float(len(inside))))
        rows.append((ORTHOGONAL, float(value), "theorem1", "passed", float(passed)))
        rows.append((ORTHOGONAL, float(value), "theorem1", "out_of_regime", float(len(recs) - len(inside))))
    return rows


def run_gh_validation(cfg: ExperimentConfig, workers: int = 1) -> RunResult:
    _expect(cfg, GH)
    return _run(cfg, {}, _gh_trial, workers, _gh_extra)


# ---------------------------------------------------------------- explainer


_MODEL_CACHE: Dict[str, Any] = {}


def _model_from(ctx: Dict[str, Any]):
    if ctx.get("model") is not None:
        return ctx["model"]
    command = ctx["model_command"]
    if command not in _MODEL_CACHE:
        _MODEL_CACHE[command] = subprocess_model(command)
    return _MODEL_CACHE[command]


def _prepare_explain(cfg: ExperimentConfig) -> Dict[str, Any]:
    ctx: Dict[str, Any] = {"model": None, "model_command": cfg.model_command, "ground_truth": None}
    dseed = _dataset_seed(cfg)
    if "testbed" in cfg.dataset:
        tb = testbed_params(cfg)
        bed = sparse_testbed(tb["n_features"], tb["n_true"], tb["n_samples"], tb["low_dim"],
                             seed=dseed, epochs=cfg.epochs)
        ctx.update(data=bed.data, model=bed.model, ground_truth=bed.ground_truth)
    else:
        ctx["data"] = load_csv(cfg.dataset["csv"])
        if cfg.model:
            model = load_model(cfg.model)
            ctx["model"] = model
            if isinstance(model, LogisticModel):
                ctx["ground_truth"] = model.ground_truth
    data = ctx["data"]
    if ctx["model"] is not None and ctx["model"].n_features != data.dim:
        raise ConfigError(f"model expects {ctx['model'].n_features} features, data has {data.dim}")
    if cfg.low_dim >= data.dim:
        raise ConfigError(f"low_dim {cfg.low_dim} must be below the data dimension {data.dim}")
    ctx["mapper"] = _mapper_for(cfg, data)
    ctx["order"] = dseed.rng(1).permutation(data.n)
    if ctx["ground_truth"] is not None and len(ctx["ground_truth"]) == 0:
        ctx["ground_truth"] = None
    return ctx


def _emap_counts(cfg: ExperimentConfig, data: PointCloud) -> Tuple[int, int]:
    labels = data.labels if data.labels is not None else np.zeros(data.n)
    pivots = cfg.p * len(np.unique(labels)) + 1
    per = -(-cfg.k // pivots)
    return per, per * pivots


def _explain_trial(cfg: ExperimentConfig, ctx: Dict[str, Any], t: int):
    seed = Seed(cfg.seed, t)
    data, mapper = ctx["data"], ctx["mapper"]
    model = _model_from(ctx)
    x0 = data.points[ctx["order"][t % data.n]]
    r = float(cfg.radii[0])
    records = []
    for scheme in cfg.schemes:
        if scheme == EMAP:
            per, _ = _emap_counts(cfg, data)
            perts = emap_sample(data, x0, cfg.p, per, cfg.low_dim, r, seed=seed, mapper=mapper,
                                k_train=cfg.k_train, r_train=cfg.r_train)
            kernel = KernelSpec(cfg.kernel, cfg.kernel_width)
        else:
            # masks come from the same substream for every baseline: a paired design
            perts = baseline_perturbations(x0, scheme, cfg.k, r, seed=seed.rng(3))
            kind = UNIFORM if cfg.kernel == UNIFORM else EXPONENTIAL_AMBIENT
            kernel = KernelSpec(kind, cfg.kernel_width)
        expl = lime_explain(model, x0, perts, kernel, cfg.ridge)
        metrics = {"n_perturbations": float(len(perts)), "kernel_width": float(expl.kernel_width)}
        if ctx["ground_truth"] is not None:
            for k in cfg.top_k:
                pr = precision_recall(expl, ctx["ground_truth"], k)
                metrics[f"precision@{k}"] = pr["precision"]
                metrics[f"recall@{k}"] = pr["recall"]
        metrics["log_odds"] = log_odds_score(model, x0, expl, cfg.top_fraction, cfg.baseline_value)
        metrics["infidelity"] = infidelity_score(model, x0, expl, cfg.infidelity_radius, cfg.infidelity_draws,
                                                 seed=seed.rng(4))
        records.append(TrialRecord(t, _seed_text(cfg.seed, t), scheme, r, metrics,
                                   noise_seed=_seed_text(cfg.seed, t, 3)))
    return records, None, {}


def run_explainer_eval(cfg: ExperimentConfig, workers: int = 1) -> RunResult:
    _expect(cfg, EXPLAIN)
    ctx = _prepare_explain(cfg) if cfg.n_trials else {}
    result = _run(cfg, ctx, _explain_trial, workers, None)
    counts = [cfg.k]
    if EMAP in cfg.schemes and ctx:
        counts.append(_emap_counts(cfg, ctx["data"])[1])
    if min(counts) < PAPER_PERTURBATIONS:
        msg = f"perturbation count {min(counts)} below paper default {PAPER_PERTURBATIONS}"
        log.warning(msg)
        result.flags.append(msg)
    return result


# ---------------------------------------------------------------- discriminator


def _stratified_split(rng: np.random.Generator, n_neg: int, n_pos: int, fraction: float):
    def one(m):
        idx = rng.permutation(m)
        cut = int(round(fraction * m))
        return np.sort(idx[:cut]), np.sort(idx[cut:])

    return one(n_neg), one(n_pos)


def discriminator_rates(originals: np.ndarray, perturbed: np.ndarray, rng: np.random.Generator,
                        train_fraction: float = 0.7, epochs: int = 2000) -> Dict[str, float]:
    """Train a logistic discriminator (0 = original, 1 = perturbation) and score a held-out split.

    Returns TP (perturbations flagged) and TN (originals passed) in percent.
    """
    if min(len(originals), len(perturbed)) < MIN_POOL_PER_CLASS:
        raise RunFailure(f"pool too small: need at least {MIN_POOL_PER_CLASS} points per class")
    (neg_tr, neg_te), (pos_tr, pos_te) = _stratified_split(rng, len(originals), len(perturbed), train_fraction)
    x_tr = np.vstack([originals[neg_tr], perturbed[pos_tr]])
    mu, sd = x_tr.mean(axis=0), x_tr.std(axis=0)
    sd[sd == 0] = 1.0
    y_tr = np.r_[np.zeros(len(neg_tr), dtype=np.int64), np.ones(len(pos_tr), dtype=np.int64)]
    model = train_l1_logistic(PointCloud((x_tr - mu) / sd, labels=y_tr), l1_strength=0.0, epochs=epochs)
    flag_pos = model.predict((perturbed[pos_te] - mu) / sd)[:, 1] > 0.5
    flag_neg = model.predict((originals[neg_te] - mu) / sd)[:, 1] > 0.5
    tp = 100.0 * float(np.mean(flag_pos))
    tn = 100.0 * float(np.mean(~flag_neg))
    acc = 100.0 * float((flag_pos.sum() + (~flag_neg).sum()) / (len(flag_pos) + len(flag_neg)))
    return {"TP": tp, "TN": tn, "accuracy": acc, "TP_gap": abs(tp - 50.0), "TN_gap": abs(tn - 50.0)}


def _prepare_discriminate(cfg: ExperimentConfig) -> Dict[str, Any]:
    ctx: Dict[str, Any] = {}
    if "csv" in cfg.dataset:
        ctx["cloud"] = load_csv(cfg.dataset["csv"])
        n = ctx["cloud"].n
    elif "shape" in cfg.dataset:
        n = int(cfg.dataset["n_points"])
    else:
        raise ConfigError("discriminator runs need a 'shape' or 'csv' dataset")
    if n < MIN_POOL_PER_CLASS:
        raise ConfigError(f"pool too small: {n} points, need at least {MIN_POOL_PER_CLASS} per class")
    return ctx


def _discriminate_trial(cfg: ExperimentConfig, ctx: Dict[str, Any], t: int):
    seed = Seed(cfg.seed, t)
    cloud = _load_or_generate(cfg, ctx, seed)
    n, dim = cloud.n, cloud.dim
    needs_mapper = any(s in (EMAP, PROJECTION, ORTHOGONAL) for s in cfg.schemes)
    mapper = _mapper_for(cfg, cloud) if needs_mapper else None
    records = []
    for ri, r in enumerate(cfg.radii):
        noise = gaussian_noise(seed.rng(1, ri), n, dim, r)
        masks = seed.rng(2, ri)
        mask = None
        for scheme in cfg.schemes:
            si = _SCHEME_INDEX[scheme]
            if r == 0:
                pts = cloud.points.copy()
            elif scheme == EMAP:
                sampler = EmapSampler(mapper, k_train=cfg.k_train, r_train=cfg.r_train)
                pts = np.empty_like(cloud.points)
                for i, x in enumerate(cloud.points):
                    sub = sampler.local_subspace(x, r, seed.rng(5, ri, i))
                    pts[i], _ = sampler.gen_perturbation(x, 1, r, None, subspace=sub, noise=noise[i:i + 1])
            elif scheme in (ZERO_MASK, MULTIPLICATIVE_UNIFORM):
                if mask is None:
                    mask = lime_mask(masks, n, dim)
                pts = perturb_cloud(cloud, PerturbationScheme(scheme, r), seed=seed.rng(2, ri, si), mask=mask).points
            elif scheme == GAUSSIAN:
                pts = cloud.points + noise
            else:
                subspace = _global_subspace(cfg, cloud)
                if subspace is None:
                    disp = _pointwise_displacements(cfg, cloud, noise, scheme, r, seed, (2, ri, si))
                    pts = cloud.points + disp
                else:
                    pts = perturb_cloud(cloud, PerturbationScheme(scheme, r), subspace,
                                        seed=seed.rng(2, ri, si), noise=noise).points
            # the split is shared by every scheme of the trial
            metrics = discriminator_rates(cloud.points, pts, seed.rng(3, ri), cfg.train_fraction,
                                          cfg.discriminator_epochs)
            records.append(TrialRecord(t, _seed_text(cfg.seed, t), scheme, float(r), metrics,
                                       noise_seed=_seed_text(cfg.seed, t, 1, ri)))
    return records, None, {}


def run_discriminator_test(cfg: ExperimentConfig, workers: int = 1) -> RunResult:
    _expect(cfg, DISCRIMINATE)
    return _run(cfg, _prepare_discriminate(cfg), _discriminate_trial, workers, None)


# ---------------------------------------------------------------- driver


RUNNERS = {
    BOTTLENECK: run_bottleneck_comparison,
    GH: run_gh_validation,
    EXPLAIN: run_explainer_eval,
    DISCRIMINATE: run_discriminator_test,
}


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> RunResult:
    return RUNNERS[cfg.kind](cfg, workers=workers)


def _expect(cfg: ExperimentConfig, kind: str) -> None:
    if cfg.kind != kind:
        raise ConfigError(f"config kind {cfg.kind!r} passed to the {kind} runner")


def _call_trial(fn, cfg, ctx, t):
    return fn(cfg, ctx, t)


def _run(cfg: ExperimentConfig, ctx: Dict[str, Any], fn, workers: int, extra) -> RunResult:
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    trials = range(cfg.n_trials)
    call = partial(_call_trial, fn, cfg, ctx)
    if workers == 1 or cfg.n_trials <= 1:
        outputs = [call(t) for t in trials]
    else:
        # spawn: forking a process that already holds BLAS or numba threads is unsafe
        with ProcessPoolExecutor(max_workers=workers, mp_context=multiprocessing.get_context("spawn")) as pool:
            outputs = list(pool.map(call, trials, chunksize=1))
    records: List[TrialRecord] = []
    skipped: List[Dict[str, Any]] = []
    counters: Dict[str, int] = {}
    for recs, skip, count in outputs:
        records.extend(recs)
        if skip is not None:
            skipped.append(skip)
        for key, val in count.items():
            counters[key] = counters.get(key, 0) + int(val)
    order = {s: i for i, s in enumerate(cfg.schemes)}
    records.sort(key=lambda rec: (rec.trial, rec.radius, order.get(rec.scheme, len(order))))
    ids = [(r.trial, r.scheme, r.radius) for r in records]
    if len(ids) != len(set(ids)):
        raise RunFailure("duplicate trial rows")
    if skipped:
        log.warning("%d trial(s) skipped: %s", len(skipped), skipped[0]["reason"])
    summary = summarize(records, cfg.schemes)
    if extra is not None:
        summary.extend(extra(cfg, records))
    return RunResult(cfg, records, summary, skipped, [], counters)


def summarize(records: Sequence[TrialRecord], schemes: Sequence[str] = ()):
    """Mean, sample standard deviation and count per (scheme, radius, metric)."""
    groups: Dict[Tuple[str, float], Dict[str, List[float]]] = {}
    for rec in records:
        g = groups.setdefault((rec.scheme, rec.radius), {})
        for key, val in rec.metrics.items():
            g.setdefault(key, []).append(val)
    order = {s: i for i, s in enumerate(schemes)}
    rows = []
    for (scheme, radius) in sorted(groups, key=lambda k: (order.get(k[0], len(order)), k[0], k[1])):
        for metric, vals in groups[(scheme, radius)].items():
            arr = np.array(vals)
            std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
            rows.append((scheme, radius, metric, "mean", float(arr.mean())))
            rows.append((scheme, radius, metric, "std", std))
            rows.append((scheme, radius, metric, "n", float(len(arr))))
    return rows


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trials_csv(records: Sequence[TrialRecord]) -> str:
    metric_names: List[str] = []
    for rec in records:
        for key in rec.metrics:
            if key not in metric_names:
                metric_names.append(key)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "seed", "noise_seed", "scheme", "radius", "status", *metric_names])
    for rec in records:
        w.writerow([rec.trial, rec.seed, rec.noise_seed, rec.scheme, _fmt(float(rec.radius)), rec.status,
                    *(_fmt(float(rec.metrics[m])) if m in rec.metrics else "" for m in metric_names)])
    return buf.getvalue()


def summary_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scheme", "radius", "metric", "statistic", "value"])
    for scheme, radius, metric, stat, value in rows:
        w.writerow([scheme, _fmt(float(radius)), metric, stat, _fmt(float(value))])
    return buf.getvalue()


def read_trials_csv(path) -> List[TrialRecord]:
    """Parse a trials.csv back into records (metrics as floats)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fixed = {"trial", "seed", "noise_seed", "scheme", "radius", "status"}
        out = []
        for row in reader:
            metrics = {k: float(v) for k, v in row.items() if k not in fixed and v != ""}
            out.append(TrialRecord(int(row["trial"]), row["seed"], row["scheme"], float(row["radius"]), metrics,
                                   row["noise_seed"], row["status"]))
    return out


def _versions() -> Dict[str, str]:
    import numba
    import scipy

    from .. import __version__

    return {"emap": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def write_outputs(result: RunResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trials.csv").write_text(trials_csv(result.records))
    (out / "summary.csv").write_text(summary_csv(result.summary))
    config = result.config.to_dict()
    config.pop("out_dir", None)
    meta = {
        "config": config,
        "seed": result.config.seed,
        "versions": _versions(),
        "n_records": len(result.records),
        "skipped": result.skipped,
        "counters": result.counters,
        "flags": result.flags,
    }
    if result.config.kind == DISCRIMINATE:
        meta["discriminator"] = DISCRIMINATOR_NOTE
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out
