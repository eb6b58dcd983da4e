"""Built-in property suite: equivariance, oracles, gradient checks.

Run via ``lmdm selftest``; each check prints one pass/fail line. Kept fast
(seconds) so it can gate releases and smoke-test installs.
"""

from __future__ import annotations

import numpy as np
import torch

from .autoencoder import LatentState, MolecularAutoencoder
from .data import make_toy_dataset, one_hot_features
from .diffusion import (feature_score_target, make_schedule, mu_theta,
                        posterior_mean_var, q_sample)
from .geometry import Molecule, edge_masks, pairwise_distances, project_zero_com
from .metrics import infer_bonds, molecule_checks
from .score_network import DualScoreNetwork
from .trainer import grad_check


def random_rotation(rng: np.random.Generator) -> torch.Tensor:
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return torch.from_numpy(q)


def _check_egnn_equivariance() -> bool:
    torch.manual_seed(0)
    rng = np.random.default_rng(0)
    ae = MolecularAutoencoder(vocab_size=5, k=1, hidden_dim=16, n_layers=2)
    for _ in range(5):
        n = int(rng.integers(2, 6))
        x = torch.randn(n, 3, dtype=torch.float64)
        h = torch.randn(n, 6, dtype=torch.float64)
        h[:, :5] = 0.0
        h[torch.arange(n), torch.from_numpy(rng.integers(0, 5, n))] = 1.0
        rot = random_rotation(rng)
        t = torch.randn(3, dtype=torch.float64)
        with torch.no_grad():
            mu_x, mu_h, _, _ = ae.encode(x, h)
            mu_x_r, mu_h_r, _, _ = ae.encode(x @ rot.T + t, h)
        scale = 1.0 + float(mu_x.norm())
        if float((mu_x_r - mu_x @ rot.T).norm()) > 1e-6 * scale:
            return False
        if float((mu_h_r - mu_h).norm()) > 1e-6 * (1.0 + float(mu_h.norm())):
            return False
    return True


def _check_score_equivariance() -> bool:
    torch.manual_seed(1)
    rng = np.random.default_rng(1)
    net = DualScoreNetwork(k=1, hidden_dim=16, n_conv=2)
    sched = make_schedule("linear", 10)
    for _ in range(5):
        n = int(rng.integers(2, 6))
        z_x = project_zero_com(torch.randn(n, 3, dtype=torch.float64))
        z_h = torch.randn(n, 1, dtype=torch.float64)
        eta = torch.randn(n, net.noise_dim, dtype=torch.float64)
        rot = random_rotation(rng)
        lm, gm = edge_masks(z_x, 2.0)
        lm2, gm2 = edge_masks(z_x @ rot.T, 2.0)
        with torch.no_grad():
            s_x, s_h = net.dual_score(LatentState(z_x, z_h), eta, 3,
                                      sched.T, lm, gm)
            s_x2, s_h2 = net.dual_score(LatentState(z_x @ rot.T, z_h), eta, 3,
                                        sched.T, lm2, gm2)
        if float((s_x2 - s_x @ rot.T).norm()) > 1e-6 * (1.0 + float(s_x.norm())):
            return False
        if float((s_h2 - s_h).norm()) > 1e-9 * (1.0 + float(s_h.norm())):
            return False
    return True


def _check_schedule_oracle() -> bool:
    sched = make_schedule("linear", 50)
    prev = np.concatenate([[1.0], sched.alpha_bar[:-1]])
    ref = (1.0 - prev) / (1.0 - sched.alpha_bar) * sched.beta
    ref[0] = sched.beta[0]
    return bool(np.allclose(sched.beta_tilde, ref, atol=1e-12))


def _check_parameterization_equivalence() -> bool:
    sched = make_schedule("linear", 100)
    rng = np.random.default_rng(2)
    for _ in range(20):
        t = int(rng.integers(1, 101))
        z0 = torch.from_numpy(rng.standard_normal((4, 3)))
        eps = torch.from_numpy(rng.standard_normal((4, 3)))
        z_t = q_sample(z0, t, eps, sched)
        ab = sched.alpha_bar[t - 1]
        score = -eps / np.sqrt(1.0 - ab)
        lhs = mu_theta(z_t, score, t, sched)
        rhs = (z_t - sched.beta[t - 1] / np.sqrt(1.0 - ab) * eps) \
            / np.sqrt(sched.alpha[t - 1])
        if float((lhs - rhs).abs().max()) > 1e-12:
            return False
    return True


def _check_posterior_consistency() -> bool:
    # exact identity: mu~(sqrt(abar_t) z0, z0) = sqrt(abar_{t-1}) z0
    sched = make_schedule("linear", 50)
    for t in (2, 10, 50):
        ab = sched.alpha_bar[t - 1]
        one = torch.ones(1, dtype=torch.float64)
        mu, _ = posterior_mean_var(np.sqrt(ab) * one, one, t, sched)
        if abs(float(mu) - np.sqrt(sched.alpha_bar[t - 2])) > 1e-12:
            return False
    return True


def _check_score_noise_duality() -> bool:
    sched = make_schedule("linear", 30)
    rng = np.random.default_rng(3)
    z0 = torch.from_numpy(rng.standard_normal((3, 2)))
    eps = torch.from_numpy(rng.standard_normal((3, 2)))
    t = 7
    z_t = q_sample(z0, t, eps, sched)
    target = feature_score_target(z_t, z0, t, sched)
    ref = -eps / np.sqrt(1.0 - sched.alpha_bar[t - 1])
    return float((target - ref).abs().max()) <= 1e-12


def _check_gradients() -> bool:
    torch.manual_seed(4)
    ae = MolecularAutoencoder(vocab_size=5, k=1, hidden_dim=8, n_layers=1)
    mols = make_toy_dataset("chains", 1, seed=0)
    coords = torch.from_numpy(project_zero_com(mols[0].coords))
    feats = torch.from_numpy(mols[0].features)

    def loss_fn():
        mu_x, mu_h, sigma_x, sigma_h = ae.encode(coords, feats)
        decoded = ae.decode(LatentState(mu_x, mu_h))
        loss, _ = ae.ae_loss(coords, feats, decoded, mu_x, mu_h,
                             sigma_x, sigma_h, reg_mode="KL")
        return loss

    err = grad_check(loss_fn, list(ae.parameters()), n_probes=10, seed=0)
    return err <= 1e-4


def _check_geometry() -> bool:
    rng = np.random.default_rng(5)
    x = rng.standard_normal((4, 3))
    proj = project_zero_com(x)
    if not np.allclose(proj.sum(axis=0), 0.0, atol=1e-9):
        return False
    if not np.allclose(project_zero_com(proj), proj, atol=1e-12):
        return False
    d = pairwise_distances(x)
    return bool(np.allclose(d, d.T) and np.allclose(np.diag(d), 0.0))


def _check_metrics() -> bool:
    # methane: C at origin, 4 H in tetrahedral directions at 1.09 A
    dirs = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]],
                    dtype=np.float64)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    coords = np.vstack([[0.0, 0.0, 0.0], 1.09 * dirs])
    elements = ["C", "H", "H", "H", "H"]
    mol = Molecule(coords=coords, features=one_hot_features(elements),
                   element_ids=elements)
    checks = molecule_checks(infer_bonds(mol), mol.charges)
    return checks["valid"] and checks["ion_free"] and checks["stable_atoms"] == 5


CHECKS = [
    ("geometry primitives", _check_geometry),
    ("egnn equivariance", _check_egnn_equivariance),
    ("dual score equivariance", _check_score_equivariance),
    ("noise schedule identity", _check_schedule_oracle),
    ("posterior coefficients", _check_posterior_consistency),
    ("score/noise parameterization", _check_parameterization_equivalence),
    ("score/noise duality", _check_score_noise_duality),
    ("analytic gradients", _check_gradients),
    ("valence metrics", _check_metrics),
]


def run_selftest(verbose: bool = True) -> list[str]:
    """Run every check; returns the names of failing ones."""
    torch.set_num_threads(1)
    failures = []
    for name, fn in CHECKS:
        try:
            ok = bool(fn())
        except Exception as exc:  # a crash is a failure, keep going
            ok = False
            if verbose:
                print(f"FAIL {name}: {exc}")
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'} {name}")
        if not ok:
            failures.append(name)
    return failures
