"""Dual equivariant score network: local + global branches plus diversity noise.

The local branch sees edges within the radius tau (covalent range), the
global branch sees everything else (long-range forces); their outputs add.
A small invariant encoder produces per-node "variational noise" that is fed
to both branches to diversify reverse trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .autoencoder import SIGMA_FLOOR, LatentState
from .invariant_net import InvariantNet


@dataclass
class VarNoise:
    mu_v: torch.Tensor
    sigma_v: torch.Tensor
    eta_v: torch.Tensor


def time_embedding(t: int, T: int, width: int, like: torch.Tensor) -> torch.Tensor:
    """Sinusoidal embedding of t/T with ``width`` channels."""
    half = width // 2
    freqs = torch.exp(torch.arange(half, dtype=like.dtype, device=like.device)
                      * (-math.log(1e4) / max(half - 1, 1)))
    angles = (t / T) * freqs * 1e3
    emb = torch.cat([torch.sin(angles), torch.cos(angles)])
    if width % 2:
        emb = torch.cat([emb, emb.new_zeros(1)])
    return emb


def sample_var_noise(mu_v: torch.Tensor, sigma_v: torch.Tensor,
                     eta: torch.Tensor, scale: str = "squared") -> torch.Tensor:
    """eta_v = mu_v + sigma_v^2 * eta (literal squared scale; 'linear' uses
    sigma_v)."""
    if scale == "squared":
        return mu_v + sigma_v**2 * eta
    if scale == "linear":
        return mu_v + sigma_v * eta
    raise ValueError(f"unknown var_noise_scale {scale!r}")


def var_noise_kl(mu_v: torch.Tensor, sigma_v: torch.Tensor) -> torch.Tensor:
    """D_KL(N(mu_v, sigma_v^2) || N(0, I)), summed over nodes/channels and
    averaged over leading batch dimensions."""
    kl = 0.5 * (mu_v**2 + sigma_v**2 - 1.0 - torch.log(sigma_v**2))
    return kl.sum(dim=(-2, -1)).mean()


class DualScoreNetwork(nn.Module):
    """s(z_t, eta_v, t) = Phi_local(...) + Phi_global(...).

    Node input per branch: [z_h, time embedding, eta_v, condition]. The
    variational-noise encoder Phi_v is itself an invariant block over the
    same inputs minus eta_v.
    """

    def __init__(self, k: int, hidden_dim: int = 64, n_conv: int = 2,
                 time_dim: int = 8, noise_dim: int = 2, cond_dim: int = 0,
                 var_noise_scale: str = "squared"):
        super().__init__()
        self.k = k
        self.time_dim = time_dim
        self.noise_dim = noise_dim
        self.cond_dim = cond_dim
        self.var_noise_scale = var_noise_scale
        in_dim = k + time_dim + noise_dim + cond_dim
        self.phi_l = InvariantNet(in_dim, hidden_dim, k, n_conv)
        self.phi_g = InvariantNet(in_dim, hidden_dim, k, n_conv)
        self.phi_v = InvariantNet(k + time_dim + cond_dim, hidden_dim,
                                  2 * noise_dim, n_conv)

    def _node_base(self, z: LatentState, t: int, T: int,
                   cond: torch.Tensor | None) -> torch.Tensor:
        parts = [z.z_h]
        emb = time_embedding(t, T, self.time_dim, z.z_h)
        parts.append(emb.expand(*z.z_h.shape[:-1], self.time_dim))
        if self.cond_dim:
            if cond is None:
                raise ValueError("network built with cond_dim > 0 needs a condition")
            parts.append(cond.expand(*z.z_h.shape[:-1], self.cond_dim))
        elif cond is not None:
            raise ValueError("condition supplied to an unconditioned network")
        return torch.cat(parts, dim=-1)

    def var_noise_encode(self, z: LatentState, t: int, T: int,
                         local_mask: torch.Tensor, global_mask: torch.Tensor,
                         cond: torch.Tensor | None = None):
        """Invariant heads (mu_v, sigma_v) per node, from the full edge set."""
        feats = self._node_base(z, t, T, cond)
        h = self.phi_v.schnet_forward(feats, z.z_x, local_mask | global_mask)
        raw = self.phi_v.node_score(h)
        mu_v, sigma_raw = raw.split(self.noise_dim, dim=-1)
        if not torch.isfinite(raw).all():
            raise FloatingPointError("non-finite variational-noise activations")
        return mu_v, F.softplus(sigma_raw) + SIGMA_FLOOR

    def dual_score(self, z: LatentState, eta_v: torch.Tensor, t: int, T: int,
                   local_mask: torch.Tensor, global_mask: torch.Tensor,
                   cond: torch.Tensor | None = None,
                   scale: tuple[float, float] = (1.0, 1.0)):
        """Sum of the two branches: (s_x (..., N, 3), s_h (..., N, k)).

        ``scale`` multiplies the (coordinate, feature) outputs; callers pass
        the analytic target magnitude at t so the heads stay O(1).
        """
        feats = torch.cat([self._node_base(z, t, T, cond), eta_v], dim=-1)
        onehot_l = torch.tensor([1.0, 0.0], dtype=z.z_x.dtype, device=z.z_x.device)
        onehot_g = torch.tensor([0.0, 1.0], dtype=z.z_x.dtype, device=z.z_x.device)
        sx_l, sh_l = self.phi_l(feats, z.z_x, local_mask, onehot_l)
        sx_g, sh_g = self.phi_g(feats, z.z_x, global_mask, onehot_g)
        return scale[0] * (sx_l + sx_g), scale[1] * (sh_l + sh_g)

    forward = dual_score
