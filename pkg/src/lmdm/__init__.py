"""Latent molecular diffusion: equivariant VAE + latent denoising diffusion
with a dual local/global score network, plus native molecule metrics."""

from .autoencoder import LatentState, MolecularAutoencoder
from .config import RunConfig, parse_config
from .data import make_toy_dataset, read_xyz, write_xyz
from .diffusion import NoiseSchedule, make_schedule
from .geometry import EdgeSet, Molecule, build_edges, pairwise_distances, project_zero_com
from .metrics import MetricsReport, infer_bonds, molecule_checks, set_metrics
from .sampler import SampleConfig, sample_molecules
from .score_network import DualScoreNetwork
from .trainer import grad_check, train_autoencoder, train_diffusion

__all__ = [
    "LatentState", "MolecularAutoencoder", "RunConfig", "parse_config",
    "make_toy_dataset", "read_xyz", "write_xyz", "NoiseSchedule",
    "make_schedule", "EdgeSet", "Molecule", "build_edges",
    "pairwise_distances", "project_zero_com", "MetricsReport", "infer_bonds",
    "molecule_checks", "set_metrics", "SampleConfig", "sample_molecules",
    "DualScoreNetwork", "grad_check", "train_autoencoder", "train_diffusion",
]

__version__ = "0.1.0"
