"""Manifold-orthogonal perturbations for local explanations, with the
topology and Gromov-Hausdorff tooling used to evaluate them."""

__version__ = "0.1.0"

from .geometry import PointCloud, Seed, generate_synthetic, load_csv, pairwise_distances, save_csv
from .perturb import EmapSampler, PerturbationScheme, PerturbationSet, emap_sample, perturb_cloud

__all__ = [
    "EmapSampler",
    "PerturbationScheme",
    "PerturbationSet",
    "PointCloud",
    "Seed",
    "__version__",
    "emap_sample",
    "generate_synthetic",
    "load_csv",
    "pairwise_distances",
    "perturb_cloud",
    "save_csv",
]
