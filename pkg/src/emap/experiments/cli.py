"""Command-line entry point.

Exit codes: 0 success, 1 configuration or input error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..explain import EXPONENTIAL_AMBIENT, EXPONENTIAL_LOWDIM, KernelSpec, baseline_perturbations, lime_explain
from ..geometry import SHAPES, CloudError, Seed, generate_synthetic, load_csv, save_csv
from ..gh import GHMode, discrete_gh
from ..manifold import fit_mapper
from ..models import load_model
from ..perturb import EMAP, SCHEMES, PerturbationScheme, Subspace, emap_sample, perturb_cloud
from ..tda import FiltrationParams, bottleneck_distance, diagrams_to_json, rips_persistence
from .config import BOTTLENECK, DISCRIMINATE, EXPLAIN, GH, ConfigError, ExperimentConfig, table_config
from .harness import run_experiment, write_outputs

log = logging.getLogger("emap")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON argument {text!r}: {exc}") from None


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--trials", type=int, help="number of trials (overrides the config)")
    p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="emap", description="Manifold-orthogonal perturbation experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic point cloud")
    p.add_argument("--shape", required=True, choices=SHAPES)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--params", type=_json_arg, default=None, help='shape parameters, e.g. \'{"radius": 1}\'')
    p.add_argument("--ambient-dim", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("perturb", help="perturb a cloud, or sample EMaP perturbations around one row")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--scheme", required=True, choices=SCHEMES + (EMAP,))
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--low-dim", type=int, default=2)
    p.add_argument("--x0-index", type=int, default=0, help="explained row (emap)")
    p.add_argument("--p", type=int, default=2, help="pivots per label (emap)")
    p.add_argument("--k", type=int, default=200, help="perturbations per pivot (emap)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("tda", help="persistence diagrams of a cloud")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--max-dim", type=int, default=1, choices=(0, 1))
    p.add_argument("--max-radius", type=float, default=None)
    p.add_argument("--budget", type=int, default=FiltrationParams().simplex_budget)
    p.add_argument("--against", help="second cloud: print bottleneck distances instead")
    p.add_argument("--out", help="write diagrams JSON here (default stdout)")

    p = sub.add_parser("gh", help="discrete GH distance of two clouds, or the GH validation experiment")
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--mode", default=GHMode.BRUTE_FORCE.value, choices=[m.value for m in GHMode])
    _experiment_flags(p)

    p = sub.add_parser("explain", help="explain one input of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="training CSV (labels column optional)")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--scheme", default=EMAP, choices=("zero_mask", "gaussian", "multiplicative_uniform", EMAP))
    p.add_argument("--radius", type=float, default=1e-3)
    p.add_argument("--low-dim", type=int, default=2)
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--k", type=int, default=1000, help="total perturbations")
    p.add_argument("--ridge", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)

    for name, text in (("eval", "explainer evaluation experiment"),
                       ("discriminate", "discriminator detectability experiment"),
                       ("compare", "bottleneck comparison experiment")):
        p = sub.add_parser(name, help=text)
        _experiment_flags(p)
        if name == "compare":
            p.add_argument("--shape", choices=SHAPES, help="use the reference row for this shape instead of --config")
            p.add_argument("--points", type=int, help="override the number of points (with --shape)")
    return parser


def _experiment(args, kind: str) -> int:
    if getattr(args, "shape", None):
        overrides = {"n_points": args.points} if args.points else {}
        cfg = table_config(args.shape, **overrides)
        if args.points and args.points > 500:
            cfg = cfg.replace(max_radius=1e9)
    elif args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        raise ConfigError("give --config" + (" or --shape" if kind == BOTTLENECK else ""))
    if cfg.kind != kind:
        raise ConfigError(f"config kind is {cfg.kind!r}, this command runs {kind!r}")
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["n_trials"] = args.trials
    if args.out is not None:
        changes["out_dir"] = args.out
    if changes:
        cfg = cfg.replace(**changes)
    result = run_experiment(cfg, workers=args.workers)
    out = write_outputs(result, cfg.out_dir)
    for flag in result.flags:
        print(f"note: {flag}", file=sys.stderr)
    print(f"{len(result.records)} rows written to {out}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    cloud = generate_synthetic(args.shape, args.params, args.n, args.noise, Seed(args.seed),
                               ambient_dim=args.ambient_dim)
    save_csv(cloud, args.out)
    return EXIT_OK


def _cmd_perturb(args) -> int:
    cloud = load_csv(args.inp)
    if args.scheme == EMAP:
        perts = emap_sample(cloud, cloud.points[args.x0_index], args.p, args.k, args.low_dim, args.radius,
                            seed=Seed(args.seed))
        perts.save(args.out)
        return EXIT_OK
    subspace = None
    if args.scheme in ("projection", "orthogonal"):
        mapper = fit_mapper(cloud, args.low_dim)
        subspace = Subspace(mapper.mean, mapper.basis)
    out = perturb_cloud(cloud, PerturbationScheme(args.scheme, args.radius), subspace, seed=Seed(args.seed))
    save_csv(out, args.out)
    return EXIT_OK


def _cmd_tda(args) -> int:
    params = FiltrationParams(max_dimension=args.max_dim,
                              max_radius=np.inf if args.max_radius is None else args.max_radius,
                              simplex_budget=args.budget)
    diagrams = rips_persistence(load_csv(args.inp), params)
    if args.against:
        other = rips_persistence(load_csv(args.against), params)
        doc = {f"H{d.dimension}": bottleneck_distance(d, o) for d, o in zip(diagrams, other)}
        text = json.dumps(doc)
    else:
        text = diagrams_to_json(diagrams)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _cmd_gh(args) -> int:
    if args.config or not (args.x or args.y):
        return _experiment(args, GH)
    if not (args.x and args.y):
        raise ConfigError("give both --x and --y")
    print(discrete_gh(load_csv(args.x), load_csv(args.y), args.mode).to_json())
    return EXIT_OK


def _cmd_explain(args) -> int:
    data = load_csv(args.data)
    model = load_model(args.model)
    if model.n_features != data.dim:
        raise ConfigError(f"model expects {model.n_features} features, data has {data.dim}")
    x0 = data.points[args.index]
    if args.scheme == EMAP:
        labels = data.labels if data.labels is not None else np.zeros(data.n)
        pivots = args.p * len(np.unique(labels)) + 1
        perts = emap_sample(data, x0, args.p, -(-args.k // pivots), args.low_dim, args.radius, seed=Seed(args.seed))
        kernel = KernelSpec(EXPONENTIAL_LOWDIM)
    else:
        perts = baseline_perturbations(x0, args.scheme, args.k, args.radius, seed=Seed(args.seed))
        kernel = KernelSpec(EXPONENTIAL_AMBIENT)
    print(lime_explain(model, x0, perts, kernel, args.ridge).to_json())
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "perturb": _cmd_perturb,
    "tda": _cmd_tda,
    "gh": _cmd_gh,
    "explain": _cmd_explain,
    "eval": lambda a: _experiment(a, EXPLAIN),
    "discriminate": lambda a: _experiment(a, DISCRIMINATE),
    "compare": lambda a: _experiment(a, BOTTLENECK),
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, CloudError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every other failure maps to the runtime exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
