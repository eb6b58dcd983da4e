"""Two-stage training: autoencoder first, then latent diffusion on the
frozen encoder.

Stage 1 optimizes reconstruction (plus optional KL) and keeps the
parameters from the best validation check; in ES mode it stops early once
validation stalls. Stage 2 samples latents through the frozen encoder,
noises them, and regresses the dual score network onto closed-form score
targets plus the variational-noise KL.

Runs are reproducible: trainers reseed torch, run single-threaded, and use
a fixed reduction order.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch

from .autoencoder import LatentState, MolecularAutoencoder
from .config import RunConfig
from .diffusion import (NoiseSchedule, coord_score_target, diffusion_loss,
                        feature_score_target, make_schedule, q_sample,
                        score_scales)
from .geometry import Molecule, edge_masks, project_zero_com
from .score_network import DualScoreNetwork, sample_var_noise, var_noise_kl

VAL_CHECK_EVERY = 100


class DivergenceError(RuntimeError):
    """Raised when the loss goes non-finite; carries the last finite state."""

    def __init__(self, msg: str, last_state: dict):
        super().__init__(msg)
        self.last_state = last_state


def _setup_determinism(seed: int) -> None:
    torch.set_num_threads(1)
    torch.manual_seed(seed)


def _split_dataset(mols: list[Molecule]):
    """Deterministic 90/10 train/validation split by index hash."""
    train, val = [], []
    for i, mol in enumerate(mols):
        bucket = (i * 2654435761 % 2**32) % 10
        (val if bucket == 0 else train).append(mol)
    if not val:
        val = train[:1]
    if not train:
        train = list(mols)
    return train, val


def _group_by_size(mols: list[Molecule]) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for i, mol in enumerate(mols):
        groups.setdefault(mol.n_atoms, []).append(i)
    return dict(sorted(groups.items()))


def _stack_batch(mols: list[Molecule], idx: list[int]):
    coords = torch.stack([torch.from_numpy(
        project_zero_com(mols[i].coords)) for i in idx])
    feats = torch.stack([torch.from_numpy(mols[i].features) for i in idx])
    conds = None
    if mols[idx[0]].condition is not None:
        conds = torch.stack([torch.from_numpy(np.asarray(
            mols[i].condition, dtype=np.float64)) for i in idx]).unsqueeze(-2)
    return coords, feats, conds


def _sample_batch(groups: dict[int, list[int]], batch_size: int,
                  rng: np.random.Generator) -> list[int]:
    sizes = list(groups)
    weights = np.array([len(groups[s]) for s in sizes], dtype=np.float64)
    n = int(rng.choice(sizes, p=weights / weights.sum()))
    return [int(i) for i in rng.choice(groups[n], size=batch_size, replace=True)]


def encoder_checksum(ae: MolecularAutoencoder) -> str:
    digest = hashlib.sha256()
    for name, p in sorted(ae.encoder.state_dict().items()):
        digest.update(name.encode())
        digest.update(p.detach().numpy().astype("<f8").tobytes())
    return digest.hexdigest()


def _validation_recon(ae: MolecularAutoencoder, val: list[Molecule],
                      cfg: RunConfig) -> float:
    """Mean-path reconstruction loss over the validation set."""
    total = 0.0
    with torch.no_grad():
        for mol in val:
            coords = torch.from_numpy(project_zero_com(mol.coords))
            feats = torch.from_numpy(mol.features)
            mu_x, mu_h, sigma_x, sigma_h = ae.encode(coords, feats)
            decoded = ae.decode(LatentState(mu_x, mu_h))
            loss, _ = ae.ae_loss(coords, feats, decoded, mu_x, mu_h,
                                 sigma_x, sigma_h, reg_mode="ES")
            total += float(loss)
    return total / len(val)


def train_autoencoder(dataset: list[Molecule], cfg: RunConfig,
                      log: list[dict] | None = None):
    """Stage 1. Returns the autoencoder at the best validation loss."""
    if not dataset:
        raise ValueError("dataset must be nonempty")
    _setup_determinism(cfg.seed)
    vocab_size = dataset[0].features.shape[1] - 1
    ae = MolecularAutoencoder(vocab_size, k=cfg.k, hidden_dim=cfg.hidden_dim,
                              n_layers=cfg.n_layers, tau=cfg.tau)
    if log is None:
        log = []
    train, val = _split_dataset(dataset)
    groups = _group_by_size(train)
    rng = np.random.default_rng(cfg.seed)
    opt = torch.optim.Adam(ae.parameters(), lr=cfg.learning_rate)

    best_state = {k: v.clone() for k, v in ae.state_dict().items()}
    best_val = _validation_recon(ae, val, cfg)
    stall = 0
    for step in range(1, cfg.max_steps + 1):
        idx = _sample_batch(groups, cfg.batch_size, rng)
        coords, feats, _ = _stack_batch(train, idx)
        mu_x, mu_h, sigma_x, sigma_h = ae.encode(coords, feats)
        eps_x = torch.randn_like(mu_x)
        eps_h = torch.randn_like(mu_h)
        z = ae.reparameterize(mu_x, mu_h, sigma_x, sigma_h, eps_x, eps_h)
        decoded = ae.decode(z)
        loss, comps = ae.ae_loss(coords, feats, decoded, mu_x, mu_h,
                                 sigma_x, sigma_h, reg_mode=cfg.reg_mode,
                                 kl_weight=cfg.kl_weight)
        if not torch.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {step}", best_state)
        opt.zero_grad()
        loss.backward()
        opt.step()
        log.append({"step": step, "stage": "ae", "loss": float(loss.detach()),
                    **{k: float(v.detach()) for k, v in comps.items()}})
        if step % VAL_CHECK_EVERY == 0:
            val_loss = _validation_recon(ae, val, cfg)
            log.append({"step": step, "stage": "ae_val", "loss": val_loss})
            if val_loss < best_val:
                best_val = val_loss
                best_state = {k: v.clone() for k, v in ae.state_dict().items()}
                stall = 0
            else:
                stall += 1
                if cfg.reg_mode == "ES" and stall >= cfg.es_patience:
                    break
    ae.load_state_dict(best_state)
    return ae, log


def _latent_z0(ae: MolecularAutoencoder, coords, feats):
    mu_x, mu_h, sigma_x, sigma_h = ae.encode(coords, feats)
    eps_x = torch.randn_like(mu_x)
    eps_h = torch.randn_like(mu_h)
    return ae.reparameterize(mu_x, mu_h, sigma_x, sigma_h, eps_x, eps_h)


def diffusion_step_loss(score_net: DualScoreNetwork, z0: LatentState, t: int,
                        sched: NoiseSchedule, cfg: RunConfig,
                        cond: torch.Tensor | None = None,
                        eps_x: torch.Tensor | None = None,
                        eps_h: torch.Tensor | None = None,
                        eta: torch.Tensor | None = None):
    """One stage-2 objective evaluation on a fixed (t, noise) draw."""
    if eps_x is None:
        eps_x = torch.randn_like(z0.z_x)
    if eps_h is None:
        eps_h = torch.randn_like(z0.z_h)
    if eta is None:
        eta = torch.randn(*z0.z_h.shape[:-1], score_net.noise_dim,
                          dtype=z0.z_h.dtype)
    eps_x = project_zero_com(eps_x)
    zx_t = q_sample(z0.z_x, t, eps_x, sched)
    zh_t = q_sample(z0.z_h, t, eps_h, sched)
    z_t = LatentState(zx_t, zh_t)
    local_mask, global_mask = edge_masks(zx_t.detach(), cfg.tau)
    mu_v, sigma_v = score_net.var_noise_encode(z_t, t, sched.T,
                                               local_mask, global_mask, cond)
    eta_v = sample_var_noise(mu_v, sigma_v, eta, cfg.var_noise_scale)
    scale_x, scale_h = score_scales(sched, t)
    s_x, s_h = score_net.dual_score(z_t, eta_v, t, sched.T,
                                    local_mask, global_mask, cond,
                                    scale=(scale_x, scale_h))
    target_x = coord_score_target(zx_t, z0.z_x, local_mask | global_mask,
                                  t, sched)
    target_h = feature_score_target(zh_t, z0.z_h, t, sched)
    # regress in scale-normalized (O(1)) units so every timestep contributes
    # comparably; the score itself keeps its analytic magnitude
    score_loss = (
        diffusion_loss(s_x / scale_x, target_x / scale_x, t, sched,
                       cfg.gamma_weighting, cfg.sigma_mode)
        + diffusion_loss(s_h / scale_h, target_h / scale_h, t, sched,
                         cfg.gamma_weighting, cfg.sigma_mode)
    )
    kl = var_noise_kl(mu_v, sigma_v)
    return score_loss + kl, {"score_loss": score_loss, "var_kl": kl}


def train_diffusion(dataset: list[Molecule], ae: MolecularAutoencoder,
                    cfg: RunConfig, log: list[dict] | None = None):
    """Stage 2. The encoder is frozen; asserted by checksum."""
    if not dataset:
        raise ValueError("dataset must be nonempty")
    _setup_determinism(cfg.seed + 1)
    ae.requires_grad_(False)
    checksum_before = encoder_checksum(ae)
    score_net = DualScoreNetwork(
        k=cfg.k, hidden_dim=cfg.hidden_dim, n_conv=cfg.n_conv,
        time_dim=cfg.time_dim, noise_dim=cfg.noise_dim,
        cond_dim=cfg.cond_dim, var_noise_scale=cfg.var_noise_scale)
    if log is None:
        log = []
    sched = make_schedule(cfg.schedule_kind, cfg.T)
    groups = _group_by_size(dataset)
    rng = np.random.default_rng(cfg.seed + 1)
    opt = torch.optim.Adam(score_net.parameters(), lr=cfg.learning_rate)
    last_state = {k: v.clone() for k, v in score_net.state_dict().items()}
    for step in range(1, cfg.max_steps + 1):
        idx = _sample_batch(groups, cfg.batch_size, rng)
        coords, feats, cond = _stack_batch(dataset, idx)
        with torch.no_grad():
            z0 = _latent_z0(ae, coords, feats)
        t = int(rng.integers(1, cfg.T + 1))
        loss, comps = diffusion_step_loss(score_net, z0, t, sched, cfg, cond)
        if not torch.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {step}", last_state)
        opt.zero_grad()
        loss.backward()
        opt.step()
        last_state = {k: v.clone() for k, v in score_net.state_dict().items()}
        log.append({"step": step, "stage": "diffusion", "t": t,
                    "loss": float(loss.detach()),
                    **{k: float(v.detach()) for k, v in comps.items()}})
    if encoder_checksum(ae) != checksum_before:
        raise RuntimeError("encoder parameters changed during stage 2")
    return score_net, log


def grad_check(loss_fn, params: list[torch.Tensor], n_probes: int = 20,
               step: float = 1e-5, seed: int = 0) -> float:
    """Max relative error between autograd and central finite differences.

    ``loss_fn`` must be deterministic. Probes ``n_probes`` randomly chosen
    parameter entries.
    """
    for p in params:
        p.requires_grad_(True)
        if p.grad is not None:
            p.grad = None
    loss = loss_fn()
    loss.backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_probes):
        pi = int(rng.integers(len(params)))
        p = params[pi]
        flat = p.detach().reshape(-1)
        ei = int(rng.integers(flat.numel()))
        orig = float(flat[ei])
        with torch.no_grad():
            flat[ei] = orig + step
            up = float(loss_fn())
            flat[ei] = orig - step
            down = float(loss_fn())
            flat[ei] = orig
        numeric = (up - down) / (2.0 * step)
        # parameters not on the loss path have no grad: analytic zero
        analytic = 0.0 if p.grad is None else float(p.grad.reshape(-1)[ei])
        rel = abs(analytic - numeric) / (abs(numeric) + 1e-8)
        worst = max(worst, rel)
    return worst
