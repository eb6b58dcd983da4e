"""Molecular variational autoencoder with equivariant latent point variables.

The latent state pairs equivariant coordinates z_x (N, 3) with invariant
per-atom features z_h (N, k). Both encoder and decoder are EGNN stacks, so
rigid motions commute with the round trip structurally; no separate
group-action bookkeeping is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .egnn import EGNN, make_mlp
from .geometry import DEFAULT_TAU, project_zero_com

SIGMA_FLOOR = 1e-5  # keeps variances away from the degenerate regime


@dataclass
class LatentState:
    """Equivariant latent coordinates plus invariant latent features."""

    z_x: torch.Tensor  # (..., N, 3), COM-free
    z_h: torch.Tensor  # (..., N, k)

    @property
    def k(self) -> int:
        return self.z_h.shape[-1]

    @property
    def n_atoms(self) -> int:
        return self.z_x.shape[-2]


def _positive(raw: torch.Tensor) -> torch.Tensor:
    return F.softplus(raw) + SIGMA_FLOOR


class Encoder(nn.Module):
    def __init__(self, feat_dim: int, hidden_dim: int, k: int, n_layers: int,
                 tau: float = DEFAULT_TAU):
        super().__init__()
        self.embed = make_mlp([feat_dim, hidden_dim])
        self.egnn = EGNN(hidden_dim, hidden_dim, n_layers, tau=tau)
        self.mu_h_head = make_mlp([hidden_dim, hidden_dim, k])
        self.sigma_x_head = make_mlp([hidden_dim, hidden_dim, 3])
        self.sigma_h_head = make_mlp([hidden_dim, hidden_dim, k])
        self.double()

    def forward(self, coords: torch.Tensor, features: torch.Tensor):
        x_out, h_out = self.egnn(coords, self.embed(features))
        if not (torch.isfinite(x_out).all() and torch.isfinite(h_out).all()):
            raise FloatingPointError("non-finite encoder activations")
        mu_x = project_zero_com(x_out)
        mu_h = self.mu_h_head(h_out)
        sigma_x = _positive(self.sigma_x_head(h_out))
        sigma_h = _positive(self.sigma_h_head(h_out))
        return mu_x, mu_h, sigma_x, sigma_h


class Decoder(nn.Module):
    def __init__(self, k: int, hidden_dim: int, vocab_size: int, n_layers: int,
                 tau: float = DEFAULT_TAU):
        super().__init__()
        self.embed = make_mlp([k, hidden_dim])
        self.egnn = EGNN(hidden_dim, hidden_dim, n_layers, tau=tau)
        self.type_head = make_mlp([hidden_dim, hidden_dim, vocab_size])
        self.charge_head = make_mlp([hidden_dim, hidden_dim, 1])
        self.double()

    def forward(self, z_x: torch.Tensor, z_h: torch.Tensor):
        x_out, h_out = self.egnn(z_x, self.embed(z_h))
        if not (torch.isfinite(x_out).all() and torch.isfinite(h_out).all()):
            raise FloatingPointError("non-finite decoder activations")
        return x_out, self.type_head(h_out), self.charge_head(h_out)


class MolecularAutoencoder(nn.Module):
    """Encoder/decoder pair plus reparameterization and the training loss."""

    def __init__(self, vocab_size: int, k: int = 1, hidden_dim: int = 64,
                 n_layers: int = 2, tau: float = DEFAULT_TAU):
        super().__init__()
        self.vocab_size = vocab_size
        self.k = k
        self.encoder = Encoder(vocab_size + 1, hidden_dim, k, n_layers, tau)
        self.decoder = Decoder(k, hidden_dim, vocab_size, n_layers, tau)

    def encode(self, coords: torch.Tensor, features: torch.Tensor):
        return self.encoder(coords, features)

    def reparameterize(self, mu_x, mu_h, sigma_x, sigma_h,
                       eps_x: torch.Tensor, eps_h: torch.Tensor) -> LatentState:
        """z = mu + sigma * eps, with the coordinate noise COM-projected."""
        eps_x = project_zero_com(eps_x)
        return LatentState(z_x=mu_x + sigma_x * eps_x,
                           z_h=mu_h + sigma_h * eps_h)

    def decode(self, z: LatentState):
        return self.decoder(z.z_x, z.z_h)

    def ae_loss(self, coords, features, decoded, mu_x, mu_h, sigma_x, sigma_h,
                reg_mode: str = "ES", kl_weight: float = 1.0):
        """Reconstruction loss plus optional KL regularization.

        Returns (total, components dict). ES mode contributes no loss term;
        the early-stopping constraint lives in the trainer.
        """
        if reg_mode not in ("ES", "KL"):
            raise ValueError(f"unknown reg_mode {reg_mode!r}")
        coords_hat, type_logits, charge_hat = decoded
        type_target = features[..., :-1].argmax(dim=-1)
        charge_target = features[..., -1:]
        coord_mse = ((coords_hat - coords) ** 2).mean()
        type_ce = F.cross_entropy(type_logits.reshape(-1, self.vocab_size),
                                  type_target.reshape(-1))
        charge_mse = ((charge_hat - charge_target) ** 2).mean()
        total = coord_mse + type_ce + charge_mse
        comps = {"coord_mse": coord_mse, "type_ce": type_ce,
                 "charge_mse": charge_mse}
        if reg_mode == "KL":
            kl = gaussian_kl(mu_x, sigma_x) + gaussian_kl(mu_h, sigma_h)
            comps["kl"] = kl
            total = total + kl_weight * kl
        return total, comps


def gaussian_kl(mu: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """Closed-form D_KL(N(mu, sigma^2) || N(0, I)), summed over latent entries
    and averaged over any leading batch dimensions."""
    kl = 0.5 * (mu**2 + sigma**2 - 1.0 - torch.log(sigma**2))
    per_item = kl.sum(dim=(-2, -1))
    return per_item.mean()
