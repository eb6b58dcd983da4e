"""Equivariant graph convolutional layers (EGCL) and stacks of them.

Coordinates update through a velocity channel weighted by relative
positions; feature updates see geometry only through squared pairwise
distances, which is what makes the coordinate path equivariant and the
feature path invariant under rigid motions.

All tensors are float64 and may carry leading batch dimensions:
x (..., N, 3), h (..., N, F), v (..., N, 3).
"""

from __future__ import annotations

import torch
from torch import nn

from .geometry import DEFAULT_TAU, pairwise_distances


def make_mlp(widths: list[int], act: type[nn.Module] = nn.SiLU,
             final_act: nn.Module | None = None, zero_last: bool = False) -> nn.Sequential:
    layers: list[nn.Module] = []
    for a, b in zip(widths[:-1], widths[1:]):
        layers.append(nn.Linear(a, b))
        layers.append(act())
    layers = layers[:-1]  # no activation after the last linear
    if zero_last:
        last = layers[-1]
        nn.init.zeros_(last.weight)
        nn.init.zeros_(last.bias)
    if final_act is not None:
        layers.append(final_act)
    return nn.Sequential(*layers).double()


class EGCL(nn.Module):
    """One equivariant convolutional layer.

    Messages: m_ij = phi_e(h_i, h_j, d_ij^2, a_ij), gated by
    e_ij = phi_inf(m_ij). Features: h' = phi_h(h_i, sum_j e_ij * m_ij).
    Velocity: v' = phi_v(h_i) * v_i + C * sum_j (x_i - x_j) * phi_x(m_ij)
    with C = 1/(N-1), then x' = x + v'.

    ``a_ij`` is a 2-dim one-hot marking the edge level (local within tau,
    global beyond); the last linear of phi_x starts at zero so coordinate
    updates vanish at initialization.
    """

    def __init__(self, feat_dim: int, hidden_dim: int, out_dim: int | None = None,
                 tau: float = DEFAULT_TAU):
        super().__init__()
        out_dim = feat_dim if out_dim is None else out_dim
        self.tau = tau
        edge_in = 2 * feat_dim + 1 + 2  # h_i, h_j, d^2, a_ij
        self.phi_e = make_mlp([edge_in, hidden_dim, hidden_dim])
        self.phi_inf = make_mlp([hidden_dim, 1], final_act=nn.Sigmoid())
        self.phi_h = make_mlp([feat_dim + hidden_dim, hidden_dim, out_dim])
        self.phi_x = make_mlp([hidden_dim, hidden_dim, 1], zero_last=True)
        self.phi_v = make_mlp([feat_dim, hidden_dim, 1])
        self.double()

    def forward(self, x: torch.Tensor, h: torch.Tensor, v: torch.Tensor,
                neighbor_mask: torch.Tensor | None = None):
        n = x.shape[-2]
        if h.shape[-2] != n or v.shape != x.shape:
            raise ValueError("shape mismatch between x, h, v")
        d = pairwise_distances(x)
        d2 = (d**2).unsqueeze(-1)
        off_diag = ~torch.eye(n, dtype=torch.bool, device=x.device)
        if neighbor_mask is None:
            neighbor_mask = off_diag.expand(d.shape)
        else:
            neighbor_mask = neighbor_mask & off_diag
        a_local = ((d <= self.tau) & off_diag).to(x.dtype).unsqueeze(-1)
        a_global = ((d > self.tau) & off_diag).to(x.dtype).unsqueeze(-1)

        h_i = h.unsqueeze(-2).expand(*h.shape[:-1], n, h.shape[-1])
        h_j = h.unsqueeze(-3).expand(*h.shape[:-2], n, n, h.shape[-1])
        m = self.phi_e(torch.cat([h_i, h_j, d2, a_local, a_global], dim=-1))
        gate = self.phi_inf(m)
        mask = neighbor_mask.to(x.dtype).unsqueeze(-1)
        agg = (gate * m * mask).sum(dim=-2)
        h_out = self.phi_h(torch.cat([h, agg], dim=-1))

        rel = x.unsqueeze(-2) - x.unsqueeze(-3)  # x_i - x_j
        coef = 1.0 / (n - 1) if n > 1 else 0.0
        coord_force = coef * (rel * self.phi_x(m) * mask).sum(dim=-2)
        v_out = self.phi_v(h) * v + coord_force
        x_out = x + v_out
        if not (torch.isfinite(x_out).all() and torch.isfinite(h_out).all()):
            raise FloatingPointError("non-finite EGCL output")
        return x_out, h_out, v_out


class EGNN(nn.Module):
    """A stack of EGCLs; velocity starts at zero and threads through layers."""

    def __init__(self, feat_dim: int, hidden_dim: int, n_layers: int,
                 out_dim: int | None = None, tau: float = DEFAULT_TAU):
        super().__init__()
        out_dim = feat_dim if out_dim is None else out_dim
        layers = []
        for i in range(n_layers):
            d_out = out_dim if i == n_layers - 1 else feat_dim
            layers.append(EGCL(feat_dim, hidden_dim, d_out, tau=tau))
        self.layers = nn.ModuleList(layers)

    def forward(self, x: torch.Tensor, h: torch.Tensor,
                neighbor_mask: torch.Tensor | None = None):
        v = torch.zeros_like(x)
        for layer in self.layers:
            x, h, v = layer(x, h, v, neighbor_mask)
        return x, h
