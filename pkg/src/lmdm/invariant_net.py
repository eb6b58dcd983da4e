"""SchNet-style invariant blocks and the distance-to-coordinate transform.

These are the building pieces of the denoising score networks: all node
embeddings see geometry only through pairwise distances, so feature scores
come out invariant, and the final transform re-introduces directionality
through relative position vectors, which makes the coordinate score
rotation-equivariant and translation-invariant.
"""

from __future__ import annotations

import torch
from torch import nn

from .egnn import make_mlp
from .geometry import DegenerateGeometryError, pairwise_distances, rbf_expand

MIN_EDGE_DIST = 1e-8


def dist_transition(s_d: torch.Tensor, coords: torch.Tensor,
                    neighbor_mask: torch.Tensor) -> torch.Tensor:
    """Turn per-edge scalars into a coordinate field.

    out_i = sum_{j in N(i)} s_d_ij / d_ij * (x_i - x_j)

    ``s_d`` has shape (..., N, N); only entries under ``neighbor_mask`` are
    used. Raises on coincident atoms along a used edge.
    """
    d = pairwise_distances(coords)
    mask = neighbor_mask.to(coords.dtype)
    if ((d < MIN_EDGE_DIST) & neighbor_mask).any():
        raise DegenerateGeometryError("coincident atoms on an edge")
    safe_d = torch.where(neighbor_mask, d, torch.ones_like(d))
    rel = coords.unsqueeze(-2) - coords.unsqueeze(-3)  # x_i - x_j
    weight = (s_d / safe_d * mask).unsqueeze(-1)
    return (weight * rel).sum(dim=-2)


class InvariantNet(nn.Module):
    """Edge embedding + L continuous-filter convolutions + score heads.

    Node embeddings start from invariant per-node features only
    (``coord_embed_mode='none'``); mode ``'raw'`` additionally embeds raw
    coordinates, which deliberately breaks invariance and exists for
    comparison runs.
    """

    def __init__(self, in_dim: int, hidden_dim: int, k_out: int, n_conv: int = 2,
                 coord_embed_mode: str = "none", edge_dim: int = 2):
        super().__init__()
        if n_conv < 1:
            raise ValueError("need at least one convolution layer")
        if coord_embed_mode not in ("none", "raw"):
            raise ValueError(f"unknown coord_embed_mode {coord_embed_mode!r}")
        self.coord_embed_mode = coord_embed_mode
        self.hidden_dim = hidden_dim
        self.edge_mlp = make_mlp([1 + edge_dim, hidden_dim, hidden_dim])
        embed_in = in_dim + (3 if coord_embed_mode == "raw" else 0)
        self.node_embed_mlp = make_mlp([embed_in, hidden_dim, hidden_dim])
        n_rbf = 16
        self.convs = nn.ModuleList()
        for _ in range(n_conv):
            self.convs.append(nn.ModuleDict({
                "W0": nn.Linear(hidden_dim, hidden_dim).double(),
                "W1": nn.Linear(hidden_dim, hidden_dim).double(),
                "W2": nn.Linear(hidden_dim, hidden_dim).double(),
                "phi_w": make_mlp([n_rbf, hidden_dim, hidden_dim]),
            }))
        self.act = nn.SiLU()
        self.node_score_mlp = make_mlp([hidden_dim, hidden_dim, k_out])
        self.distance_mlp = make_mlp([3 * hidden_dim, hidden_dim, 1])
        self.double()

    def edge_embed(self, d: torch.Tensor, e_ij: torch.Tensor) -> torch.Tensor:
        """Embed a pairwise distance plus its edge-level indicator."""
        return self.edge_mlp(torch.cat([d.unsqueeze(-1), e_ij], dim=-1))

    def schnet_forward(self, features: torch.Tensor, coords: torch.Tensor,
                       neighbor_mask: torch.Tensor) -> torch.Tensor:
        """Continuous-filter convolutions over one edge level.

        h^{l+1} = act(W0 h^l + sum_{j in N(i)} W1 phi_w(d_ij) * W2 h_j^l)
        """
        if features.shape[-2] != coords.shape[-2]:
            raise ValueError("features/coords atom-count mismatch")
        if self.coord_embed_mode == "raw":
            features = torch.cat([features, coords], dim=-1)
        h = self.node_embed_mlp(features)
        d = pairwise_distances(coords)
        mask = neighbor_mask.to(coords.dtype).unsqueeze(-1)
        filt_in = rbf_expand(d)
        for conv in self.convs:
            filt = conv["W1"](conv["phi_w"](filt_in))
            n = h.shape[-2]
            h_j = conv["W2"](h).unsqueeze(-3).expand(*h.shape[:-2], n, n, self.hidden_dim)
            msg = (filt * h_j * mask).sum(dim=-2)
            h = self.act(conv["W0"](h) + msg)
        return h

    def node_score(self, h: torch.Tensor) -> torch.Tensor:
        return self.node_score_mlp(h)

    def distance_score(self, h_i: torch.Tensor, h_j: torch.Tensor,
                       h_e: torch.Tensor) -> torch.Tensor:
        return self.distance_mlp(torch.cat([h_i, h_j, h_e], dim=-1)).squeeze(-1)

    def forward(self, features: torch.Tensor, coords: torch.Tensor,
                neighbor_mask: torch.Tensor, edge_onehot: torch.Tensor):
        """Full block: (s_x, s_h) for one edge level.

        ``edge_onehot`` is the 2-dim level indicator, broadcast over pairs.
        With no edges under the mask the coordinate score is zero.
        """
        h = self.schnet_forward(features, coords, neighbor_mask)
        s_h = self.node_score(h)
        d = pairwise_distances(coords)
        n = h.shape[-2]
        e = edge_onehot.expand(*d.shape, 2)
        h_e = self.edge_embed(d, e)
        h_i = h.unsqueeze(-2).expand(*h.shape[:-1], n, h.shape[-1])
        h_j = h.unsqueeze(-3).expand(*h.shape[:-2], n, n, h.shape[-1])
        s_d = self.distance_score(h_i, h_j, h_e)
        s_x = dist_transition(s_d, coords, neighbor_mask)
        return s_x, s_h
