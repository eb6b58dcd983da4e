"""Noise schedules, forward marginals, posterior statistics, and score targets.

Discrete-time Gaussian diffusion with variance table beta_1..beta_T. Noise
applied to the coordinate block must be center-of-mass projected by the
caller; everything here is an exact closed-form computation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .geometry import DegenerateGeometryError, pairwise_distances

MIN_EDGE_DIST = 1e-8


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    beta: np.ndarray  # (T,), beta[t-1] is beta_t
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_tilde: np.ndarray

    def __post_init__(self):
        if not ((self.beta > 0).all() and (self.beta < 1).all()):
            raise ValueError("beta must lie strictly in (0, 1)")
        if not (np.diff(self.alpha_bar) < 0).all():
            raise ValueError("alpha_bar must be strictly decreasing")

    def sigma(self, t: int, mode: str = "beta_tilde") -> float:
        """Reverse-step noise std at step t."""
        if mode == "beta_tilde":
            return float(np.sqrt(self.beta_tilde[t - 1]))
        if mode == "beta":
            return float(np.sqrt(self.beta[t - 1]))
        if mode == "unit":
            return 1.0
        raise ValueError(f"unknown sigma mode {mode!r}")

    def gamma(self, t: int, sigma_mode: str = "beta_tilde") -> float:
        """Loss weight beta_t^2 / (2 (1 - beta_t) (1 - alpha_bar_t) sigma_t^2)."""
        b = self.beta[t - 1]
        ab = self.alpha_bar[t - 1]
        s2 = self.sigma(t, sigma_mode) ** 2
        return float(b**2 / (2.0 * (1.0 - b) * (1.0 - ab) * s2))


def make_schedule(kind: str, T: int, beta_start: float = 1e-4,
                  beta_end: float = 2e-2) -> NoiseSchedule:
    """Build a variance table: 'linear' in beta or 'polynomial' in alpha_bar."""
    if T < 2:
        raise ValueError("T must be at least 2")
    if kind == "linear":
        beta = np.linspace(beta_start, beta_end, T)
    elif kind == "polynomial":
        t = np.arange(1, T + 1, dtype=np.float64)
        alpha_bar = np.clip((1.0 - (t / T) ** 2) ** 2, 1e-8, 1.0 - 1e-8)
        # enforce strict decrease after clipping, then recover beta
        alpha_bar = np.minimum.accumulate(alpha_bar)
        for i in range(1, T):
            if alpha_bar[i] >= alpha_bar[i - 1]:
                alpha_bar[i] = alpha_bar[i - 1] * (1.0 - 1e-10)
        prev = np.concatenate([[1.0], alpha_bar[:-1]])
        beta = np.clip(1.0 - alpha_bar / prev, 1e-10, 1.0 - 1e-10)
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    prev_bar = np.concatenate([[1.0], alpha_bar[:-1]])
    beta_tilde = (1.0 - prev_bar) / (1.0 - alpha_bar) * beta
    beta_tilde[0] = beta[0]
    return NoiseSchedule(T=T, beta=beta, alpha=alpha,
                         alpha_bar=alpha_bar, beta_tilde=beta_tilde)


def _check_t(t: int, sched: NoiseSchedule) -> None:
    if not 1 <= t <= sched.T:
        raise ValueError(f"t={t} outside [1, {sched.T}]")


def q_sample(z0: torch.Tensor, t: int, eps: torch.Tensor,
             sched: NoiseSchedule) -> torch.Tensor:
    """Forward marginal draw: z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps."""
    _check_t(t, sched)
    ab = sched.alpha_bar[t - 1]
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def posterior_mean_var(z_t: torch.Tensor, z0: torch.Tensor, t: int,
                       sched: NoiseSchedule):
    """Mean and variance of q(z_{t-1} | z_t, z0); valid for t >= 2."""
    if t < 2:
        raise ValueError("posterior needs t >= 2")
    _check_t(t, sched)
    a = sched.alpha[t - 1]
    ab = sched.alpha_bar[t - 1]
    ab_prev = sched.alpha_bar[t - 2]
    beta = sched.beta[t - 1]
    mu = (np.sqrt(a) * (1.0 - ab_prev) / (1.0 - ab)) * z_t \
        + (np.sqrt(ab_prev) * beta / (1.0 - ab)) * z0
    return mu, float(sched.beta_tilde[t - 1])


def mu_theta(z_t: torch.Tensor, score: torch.Tensor, t: int,
             sched: NoiseSchedule) -> torch.Tensor:
    """Reverse-kernel mean in the score convention:

    mu = (z_t + beta_t * s) / sqrt(1 - beta_t)

    Identical to the noise convention (z_t - beta_t/sqrt(1-abar_t) * eps)
    / sqrt(alpha_t) under s = -eps / sqrt(1 - abar_t).
    """
    _check_t(t, sched)
    beta = sched.beta[t - 1]
    return (z_t + beta * score) / np.sqrt(1.0 - beta)


def coord_score_target(coords_t: torch.Tensor, coords_0: torch.Tensor,
                       neighbor_mask: torch.Tensor, t: int,
                       sched: NoiseSchedule) -> torch.Tensor:
    """Distance-based coordinate score target.

    Per-edge distance gradient -sqrt(abar_t) (d~ - d) / (1 - abar_t), chained
    back to coordinates through (x_i - x_j) / d~_ij and summed over each
    node's neighbors. Translation-invariant and rotation-equivariant.
    """
    _check_t(t, sched)
    ab = sched.alpha_bar[t - 1]
    d_t = pairwise_distances(coords_t)
    d_0 = pairwise_distances(coords_0)
    if ((d_t < MIN_EDGE_DIST) & neighbor_mask).any():
        raise DegenerateGeometryError("coincident atoms on an edge")
    grad_d = -np.sqrt(ab) * (d_t - d_0) / (1.0 - ab)
    safe_d = torch.where(neighbor_mask, d_t, torch.ones_like(d_t))
    rel = coords_t.unsqueeze(-2) - coords_t.unsqueeze(-3)
    w = (grad_d / safe_d * neighbor_mask.to(coords_t.dtype)).unsqueeze(-1)
    return (w * rel).sum(dim=-2)


def feature_score_target(zh_t: torch.Tensor, zh_0: torch.Tensor, t: int,
                         sched: NoiseSchedule) -> torch.Tensor:
    """Gaussian score of the forward marginal for the invariant block:

    -(z_t - sqrt(abar_t) z0) / (1 - abar_t)
    """
    _check_t(t, sched)
    ab = sched.alpha_bar[t - 1]
    return -(zh_t - np.sqrt(ab) * zh_0) / (1.0 - ab)


def score_scales(sched: NoiseSchedule, t: int) -> tuple[float, float]:
    """Analytic magnitude of the (coordinate, feature) score targets at t.

    The targets grow like sqrt(abar)/(1-abar) and 1/sqrt(1-abar); factoring
    these out lets the network heads regress an O(1) residual at every
    timestep instead of spanning four orders of magnitude.
    """
    _check_t(t, sched)
    ab = sched.alpha_bar[t - 1]
    return float(np.sqrt(ab) / (1.0 - ab)), float(1.0 / np.sqrt(1.0 - ab))


def diffusion_loss(s_pred: torch.Tensor, target: torch.Tensor, t: int,
                   sched: NoiseSchedule, gamma_weighting: bool = False,
                   sigma_mode: str = "beta_tilde") -> torch.Tensor:
    """Mean squared error between predicted and target scores.

    Optionally weighted by gamma_t (off by default; the unweighted objective
    trains better).
    """
    if s_pred.shape != target.shape:
        raise ValueError("shape mismatch between score and target")
    loss = ((s_pred - target) ** 2).mean()
    if gamma_weighting:
        loss = loss * sched.gamma(t, sigma_mode)
    return loss
