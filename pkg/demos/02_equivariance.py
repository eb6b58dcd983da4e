"""Demonstrate the symmetry properties numerically.

Rotating and translating the input must rotate the coordinate outputs and
leave every scalar output untouched, to machine precision, with no data
augmentation involved -- it is a property of the architecture.
"""

import numpy as np
import torch

from lmdm.autoencoder import LatentState, MolecularAutoencoder
from lmdm.geometry import build_edges, edge_set_to_masks
from lmdm.score_network import DualScoreNetwork

torch.manual_seed(0)
rng = np.random.default_rng(0)

ae = MolecularAutoencoder(5, k=1, hidden_dim=32, n_layers=2)
net = DualScoreNetwork(1, hidden_dim=32, n_conv=2)

n = 6
coords = torch.from_numpy(rng.standard_normal((n, 3)) * 1.5)
feats = torch.zeros(n, 6, dtype=torch.float64)
feats[torch.arange(n), torch.from_numpy(rng.integers(0, 5, n))] = 1.0

# a random rotation (QR with sign correction) and translation
q, r = np.linalg.qr(rng.standard_normal((3, 3)))
q *= np.sign(np.diag(r))
if np.linalg.det(q) < 0:
    q[:, 0] = -q[:, 0]
rot = torch.from_numpy(q)
shift = torch.from_numpy(rng.standard_normal(3) * 10)

with torch.no_grad():
    mu_x, mu_h, _, _ = ae.encode(coords, feats)
    mu_x_moved, mu_h_moved, _, _ = ae.encode(coords @ rot.T + shift, feats)
print("encoder mu_x equivariance err:",
      float((mu_x_moved - mu_x @ rot.T).abs().max()))
print("encoder mu_h invariance err:  ",
      float((mu_h_moved - mu_h).abs().max()))

z = LatentState(torch.from_numpy(rng.standard_normal((n, 3))),
                torch.from_numpy(rng.standard_normal((n, 1))))
eta = torch.from_numpy(rng.standard_normal((n, 2)))
local, glob = edge_set_to_masks(build_edges(z.z_x.numpy(), 2.0), n)
with torch.no_grad():
    s_x, s_h = net(z, eta, 5, 100, local, glob)
    s_x2, s_h2 = net(LatentState(z.z_x @ rot.T + shift, z.z_h), eta, 5, 100,
                     local, glob)
print("dual score s_x equivariance err:",
      float((s_x2 - s_x @ rot.T).abs().max()))
print("dual score s_h invariance err:  ",
      float((s_h2 - s_h).abs().max()))
