"""Ancestral reverse sampling from the latent prior through the decoder.

Each molecule runs T reverse steps; the coordinate block is shifted to zero
center of mass after every step so the terminal Gaussian stays supported on
the translation-invariant subspace. Molecules get independent RNG streams
derived from (seed, molecule index), so sampling is reproducible and
embarrassingly parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .autoencoder import LatentState, MolecularAutoencoder
from .config import RunConfig
from .diffusion import NoiseSchedule, mu_theta, score_scales
from .geometry import Molecule, edge_masks, project_zero_com
from .score_network import DualScoreNetwork, sample_var_noise

BLOWUP_NORM = 1e6


@dataclass
class SampleConfig:
    n_molecules: int = 1
    fixed_n: int | None = None     # atom count; None draws from the histogram
    histogram: dict[int, int] | None = None
    var_noise_source: str = "normal"   # normal | uniform | encoder
    sigma_mode: str = "beta_tilde"
    condition: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_molecules < 1:
            raise ValueError("n_molecules must be at least 1")


@dataclass
class SampleStats:
    n_requested: int = 0
    n_rejected: int = 0
    trace: list[dict] = field(default_factory=list)


def node_count_histogram(mols) -> dict[int, int]:
    hist: dict[int, int] = {}
    for mol in mols:
        hist[mol.n_atoms] = hist.get(mol.n_atoms, 0) + 1
    return dict(sorted(hist.items()))


def sample_node_count(histogram: dict[int, int], rng: np.random.Generator) -> int:
    if not histogram:
        raise ValueError("empty node-count histogram")
    sizes = sorted(histogram)
    weights = np.array([histogram[s] for s in sizes], dtype=np.float64)
    return int(rng.choice(sizes, p=weights / weights.sum()))


def _draw_eta(source: str, shape, gen: torch.Generator,
              score_net: DualScoreNetwork, z: LatentState, t: int, T: int,
              local_mask, global_mask, cond, scale: str) -> torch.Tensor:
    if source == "normal":
        return torch.randn(*shape, dtype=torch.float64, generator=gen)
    if source == "uniform":
        return 2.0 * torch.rand(*shape, dtype=torch.float64, generator=gen) - 1.0
    if source == "encoder":
        mu_v, sigma_v = score_net.var_noise_encode(z, t, T, local_mask,
                                                   global_mask, cond)
        eta = torch.randn(*shape, dtype=torch.float64, generator=gen)
        return sample_var_noise(mu_v, sigma_v, eta, scale)
    raise ValueError(f"unknown var_noise_source {source!r}")


def sample_latent_trajectory(score_net: DualScoreNetwork, n_atoms: int,
                             sched: NoiseSchedule, run_cfg: RunConfig,
                             cfg: SampleConfig, gen: torch.Generator,
                             trace: list[dict] | None = None) -> LatentState:
    """Run the T-step reverse chain for one molecule; returns z_0."""
    k = score_net.k
    z_x = project_zero_com(
        torch.randn(n_atoms, 3, dtype=torch.float64, generator=gen))
    z_h = torch.randn(n_atoms, k, dtype=torch.float64, generator=gen)
    cond = None
    if cfg.condition is not None:
        cond = torch.as_tensor(cfg.condition, dtype=torch.float64).reshape(1, -1)
    for t in range(sched.T, 0, -1):
        z_x = project_zero_com(z_x)
        z = LatentState(z_x, z_h)
        local_mask, global_mask = edge_masks(z_x, run_cfg.tau)
        eta_v = _draw_eta(cfg.var_noise_source, (n_atoms, score_net.noise_dim),
                          gen, score_net, z, t, sched.T, local_mask,
                          global_mask, cond, run_cfg.var_noise_scale)
        with torch.no_grad():
            s_x, s_h = score_net.dual_score(z, eta_v, t, sched.T,
                                            local_mask, global_mask, cond,
                                            scale=score_scales(sched, t))
        mu_x = mu_theta(z_x, s_x, t, sched)
        mu_h = mu_theta(z_h, s_h, t, sched)
        sigma = sched.sigma(t, cfg.sigma_mode)
        if t > 1:
            eps_x = project_zero_com(
                torch.randn(n_atoms, 3, dtype=torch.float64, generator=gen))
            eps_h = torch.randn(n_atoms, k, dtype=torch.float64, generator=gen)
        else:
            eps_x = torch.zeros(n_atoms, 3, dtype=torch.float64)
            eps_h = torch.zeros(n_atoms, k, dtype=torch.float64)
        z_x = project_zero_com(mu_x + sigma * eps_x)
        z_h = mu_h + sigma * eps_h
        if trace is not None:
            trace.append({"t": t, "zx_norm": float(z_x.norm()),
                          "zh_norm": float(z_h.norm())})
        if max(float(z_x.norm()), float(z_h.norm())) > BLOWUP_NORM:
            raise FloatingPointError("latent trajectory blew up")
    return LatentState(project_zero_com(z_x), z_h)


def decode_to_molecule(ae: MolecularAutoencoder, z: LatentState,
                       vocab: tuple[str, ...]) -> Molecule:
    """Decode a latent state: argmax atom types, rounded integer charges."""
    with torch.no_grad():
        coords, type_logits, charge = ae.decode(z)
    types = type_logits.argmax(dim=-1).numpy()
    charges = np.rint(charge.squeeze(-1).numpy())
    elements = [vocab[i] for i in types]
    feats = np.zeros((len(elements), len(vocab) + 1))
    feats[np.arange(len(elements)), types] = 1.0
    feats[:, -1] = charges
    return Molecule(coords=coords.numpy(), features=feats, element_ids=elements)


def sample_molecules(ae: MolecularAutoencoder, score_net: DualScoreNetwork,
                     sched: NoiseSchedule, run_cfg: RunConfig,
                     cfg: SampleConfig, vocab: tuple[str, ...]):
    """Draw cfg.n_molecules molecules; returns (molecules, stats)."""
    rng = np.random.default_rng(cfg.seed)
    stats = SampleStats(n_requested=cfg.n_molecules)
    mols: list[Molecule] = []
    for index in range(cfg.n_molecules):
        if cfg.fixed_n is not None:
            n_atoms = cfg.fixed_n
        else:
            n_atoms = sample_node_count(cfg.histogram or {}, rng)
        gen = torch.Generator()
        gen.manual_seed((cfg.seed * 1_000_003 + index) % 2**63)
        try:
            z0 = sample_latent_trajectory(score_net, n_atoms, sched,
                                          run_cfg, cfg, gen)
        except FloatingPointError:
            stats.n_rejected += 1
            continue
        mols.append(decode_to_molecule(ae, z0, vocab))
    return mols, stats
