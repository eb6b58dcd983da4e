"""Geometric primitives: molecules, center-of-mass projection, distances, edges.

Coordinates are in Angstrom throughout. Edge lists are directed: both
orientations of a pair are stored so downstream message passing never has
to symmetrize.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

DEFAULT_TAU = 2.0  # local-edge radius; covalent bonds rarely exceed 2 A

# RBF defaults: 16 centers on [0, 10] A, width equal to the spacing.
DEFAULT_RBF_CENTERS = np.linspace(0.0, 10.0, 16)
DEFAULT_RBF_WIDTH = 10.0 / 15


class InvalidGeometryError(ValueError):
    """Raised on non-finite coordinates or malformed molecular inputs."""


class DegenerateGeometryError(ValueError):
    """Raised when coincident atoms appear on an edge used for distances."""


@dataclass
class Molecule:
    """A 3D molecule: coordinates plus per-atom features.

    ``features`` rows carry an atom-type one-hot block followed by a single
    integer-valued charge entry, so ``features.shape[1] == len(vocab) + 1``.
    """

    coords: np.ndarray  # (N, 3)
    features: np.ndarray  # (N, |vocab| + 1)
    element_ids: list[str]
    condition: np.ndarray | None = None  # optional property vector

    def __post_init__(self) -> None:
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise InvalidGeometryError(f"coords must be (N, 3), got {self.coords.shape}")
        n = self.coords.shape[0]
        if n < 1:
            raise InvalidGeometryError("molecule needs at least one atom")
        if not np.isfinite(self.coords).all():
            raise InvalidGeometryError("coords contain non-finite entries")
        if self.features.shape[0] != n:
            raise InvalidGeometryError("features/coords row mismatch")
        onehot = self.features[:, :-1]
        if not np.allclose(onehot.sum(axis=1), 1.0):
            raise InvalidGeometryError("each one-hot block must sum to exactly 1")
        if len(self.element_ids) != n:
            raise InvalidGeometryError("element_ids length mismatch")

    @property
    def n_atoms(self) -> int:
        return self.coords.shape[0]

    @property
    def charges(self) -> np.ndarray:
        return self.features[:, -1]


@dataclass
class EdgeSet:
    """Directed edges split into a local (within tau) and a global level."""

    local: list[tuple[int, int]] = field(default_factory=list)
    global_: list[tuple[int, int]] = field(default_factory=list)

    def all_pairs(self) -> list[tuple[int, int]]:
        return sorted(self.local + self.global_)


def project_zero_com(coords):
    """Subtract the mean position so rows sum to the zero 3-vector.

    Accepts numpy arrays or torch tensors with shape (..., N, 3); the
    projection is applied over the atom axis.
    """
    if isinstance(coords, torch.Tensor):
        if not torch.isfinite(coords).all():
            raise InvalidGeometryError("coords contain non-finite entries")
        return coords - coords.mean(dim=-2, keepdim=True)
    coords = np.asarray(coords, dtype=np.float64)
    if not np.isfinite(coords).all():
        raise InvalidGeometryError("coords contain non-finite entries")
    return coords - coords.mean(axis=-2, keepdims=True)


def pairwise_distances(coords):
    """Full N x N Euclidean distance matrix (zero diagonal, symmetric)."""
    if isinstance(coords, torch.Tensor):
        if not torch.isfinite(coords).all():
            raise InvalidGeometryError("coords contain non-finite entries")
        diff = coords.unsqueeze(-2) - coords.unsqueeze(-3)
        return diff.norm(dim=-1)
    coords = np.asarray(coords, dtype=np.float64)
    if not np.isfinite(coords).all():
        raise InvalidGeometryError("coords contain non-finite entries")
    diff = coords[..., :, None, :] - coords[..., None, :, :]
    return np.linalg.norm(diff, axis=-1)


def build_edges(coords, tau: float = DEFAULT_TAU) -> EdgeSet:
    """Partition all ordered pairs into local (d <= tau) and global edges.

    The comparison is inclusive at exactly tau. Both edge lists come back in
    lexicographic (i, j) order.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    d = pairwise_distances(coords)
    if isinstance(d, torch.Tensor):
        d = d.detach().cpu().numpy()
    n = d.shape[0]
    edges = EdgeSet()
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            (edges.local if d[i, j] <= tau else edges.global_).append((i, j))
    return edges


def edge_masks(coords: torch.Tensor, tau: float = DEFAULT_TAU):
    """Boolean (local, global) adjacency masks for batched tensors.

    ``coords`` has shape (..., N, 3); masks have shape (..., N, N) with a
    False diagonal. Equivalent to :func:`build_edges` but vectorized.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    d = pairwise_distances(coords)
    n = d.shape[-1]
    off_diag = ~torch.eye(n, dtype=torch.bool, device=d.device)
    local = (d <= tau) & off_diag
    global_ = (d > tau) & off_diag
    return local, global_


def edge_set_to_masks(edges: EdgeSet, n: int) -> tuple[torch.Tensor, torch.Tensor]:
    local = torch.zeros(n, n, dtype=torch.bool)
    global_ = torch.zeros(n, n, dtype=torch.bool)
    for i, j in edges.local:
        local[i, j] = True
    for i, j in edges.global_:
        global_[i, j] = True
    return local, global_


def rbf_expand(d, centers=None, width: float = None):
    """Gaussian radial basis expansion of a distance (or tensor of them)."""
    if centers is None:
        centers = DEFAULT_RBF_CENTERS
    if width is None:
        width = DEFAULT_RBF_WIDTH
    if width <= 0:
        raise ValueError("width must be positive")
    if isinstance(d, torch.Tensor):
        c = torch.as_tensor(centers, dtype=d.dtype, device=d.device)
        return torch.exp(-((d.unsqueeze(-1) - c) ** 2) / (2.0 * width**2))
    d = np.asarray(d, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    return np.exp(-((d[..., None] - centers) ** 2) / (2.0 * width**2))
