import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from lmdm.geometry import (DEFAULT_TAU, EdgeSet, InvalidGeometryError, Molecule,
                           build_edges, edge_masks, edge_set_to_masks,
                           pairwise_distances, project_zero_com, rbf_expand)

from conftest import random_rotation


class TestProjectZeroCom:
    def test_already_centered_unchanged(self):
        coords = np.array([[1.0, 0, 0], [-1.0, 0, 0]])
        assert np.allclose(project_zero_com(coords), coords)

    def test_single_point_maps_to_origin(self):
        assert np.allclose(project_zero_com([[2.0, 2.0, 2.0]]), 0.0)

    def test_subtracts_column_means(self):
        # hand-check oracle: column means are (2, 1, 0)
        out = project_zero_com([[1.0, 1.0, 0.0], [3.0, 1.0, 0.0]])
        assert np.allclose(out, [[-1, 0, 0], [1, 0, 0]])

    def test_rows_sum_to_zero(self, rng):
        out = project_zero_com(rng.standard_normal((7, 3)))
        assert np.abs(out.sum(axis=0)).max() <= 1e-9

    def test_idempotent(self, rng):
        once = project_zero_com(rng.standard_normal((5, 3)))
        assert np.abs(project_zero_com(once) - once).max() <= 1e-12

    def test_rotation_equivariant(self, rng, rotation):
        coords = rng.standard_normal((6, 3))
        lhs = project_zero_com(coords @ rotation.T)
        rhs = project_zero_com(coords) @ rotation.T
        assert np.abs(lhs - rhs).max() <= 1e-9

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidGeometryError):
            project_zero_com([[np.nan, 0, 0]])

    def test_torch_batched(self):
        x = torch.randn(4, 5, 3, dtype=torch.float64)
        out = project_zero_com(x)
        assert out.sum(dim=-2).abs().max() <= 1e-9


class TestPairwiseDistances:
    def test_3_4_5_triangle(self):
        d = pairwise_distances([[0.0, 0, 0], [3.0, 4.0, 0]])
        assert d[0, 1] == pytest.approx(5.0)

    def test_zero_diagonal_symmetric(self, rng):
        d = pairwise_distances(rng.standard_normal((6, 3)))
        assert np.allclose(np.diag(d), 0.0)
        assert np.allclose(d, d.T)

    def test_matches_double_loop_oracle(self, rng):
        coords = rng.standard_normal((4, 3))
        d = pairwise_distances(coords)
        for i in range(4):
            for j in range(4):
                ref = np.sqrt(((coords[i] - coords[j]) ** 2).sum())
                assert d[i, j] == pytest.approx(ref, abs=1e-12)

    def test_rigid_motion_invariant(self, rng, rotation):
        coords = rng.standard_normal((5, 3))
        moved = coords @ rotation.T + rng.standard_normal(3)
        assert np.abs(pairwise_distances(moved)
                      - pairwise_distances(coords)).max() <= 1e-9

    def test_triangle_inequality(self, rng):
        d = pairwise_distances(rng.standard_normal((5, 3)))
        for i in range(5):
            for j in range(5):
                for k in range(5):
                    assert d[i, j] <= d[i, k] + d[k, j] + 1e-12


class TestBuildEdges:
    def test_below_threshold_local(self):
        edges = build_edges([[0.0, 0, 0], [1.5, 0, 0]], tau=2.0)
        assert edges.local == [(0, 1), (1, 0)]
        assert edges.global_ == []

    def test_above_threshold_global(self):
        edges = build_edges([[0.0, 0, 0], [2.5, 0, 0]], tau=2.0)
        assert edges.local == []
        assert edges.global_ == [(0, 1), (1, 0)]

    def test_tie_at_tau_is_local(self):
        edges = build_edges([[0.0, 0, 0], [2.0, 0, 0]], tau=2.0)
        assert edges.local == [(0, 1), (1, 0)]

    def test_three_atom_partition(self):
        # d_01 = 1.0, d_02 = 2.5, d_12 = 3.0 (3-4-5 scaled)
        coords = [[0.0, 0, 0], [1.0, 0, 0], [0.0, 2.5, 0]]
        d = pairwise_distances(coords)
        assert d[0, 1] == pytest.approx(1.0)
        assert d[0, 2] == pytest.approx(2.5)
        edges = build_edges(coords, tau=2.0)
        assert edges.local == [(0, 1), (1, 0)]
        assert sorted(edges.global_) == [(0, 2), (1, 2), (2, 0), (2, 1)]

    @given(n=st.integers(2, 7), seed=st.integers(0, 100))
    @settings(max_examples=25, deadline=None)
    def test_exact_partition(self, n, seed):
        coords = np.random.default_rng(seed).standard_normal((n, 3)) * 2
        edges = build_edges(coords, tau=DEFAULT_TAU)
        assert len(edges.local) + len(edges.global_) == n * (n - 1)
        assert set(edges.local) & set(edges.global_) == set()
        assert all(((j, i) in edges.local) for i, j in edges.local)

    def test_masks_agree_with_lists(self, rng):
        coords = rng.standard_normal((5, 3)) * 2
        edges = build_edges(coords, tau=2.0)
        lm_ref, gm_ref = edge_set_to_masks(edges, 5)
        lm, gm = edge_masks(torch.from_numpy(coords), 2.0)
        assert torch.equal(lm, lm_ref)
        assert torch.equal(gm, gm_ref)

    def test_rejects_bad_tau(self):
        with pytest.raises(ValueError):
            build_edges([[0.0, 0, 0]], tau=0.0)


class TestRbfExpand:
    def test_peak_at_center(self):
        out = rbf_expand(1.0, centers=[0.0, 1.0, 2.0], width=1.0)
        assert out[1] == pytest.approx(1.0)

    def test_decays_far_away(self):
        out = rbf_expand(100.0, centers=[0.0, 1.0], width=1.0)
        assert out.max() < 1e-300 or out.max() == 0.0

    def test_closed_form(self):
        out = rbf_expand(1.0, centers=[0.0, 1.0, 2.0], width=1.0)
        assert np.allclose(out, [np.exp(-0.5), 1.0, np.exp(-0.5)])

    def test_range(self, rng):
        out = rbf_expand(rng.uniform(0, 10, 20))
        assert (out > 0).all() and (out <= 1.0).all()


class TestMolecule:
    def test_valid_molecule(self):
        mol = Molecule(coords=[[0.0, 0, 0]], features=[[1.0, 0, 0, 0, 0, 0]],
                       element_ids=["H"])
        assert mol.n_atoms == 1

    def test_rejects_bad_onehot(self):
        with pytest.raises(InvalidGeometryError):
            Molecule(coords=[[0.0, 0, 0]], features=[[0.5, 0.2, 0, 0, 0, 0]],
                     element_ids=["H"])

    def test_rejects_non_finite_coords(self):
        with pytest.raises(InvalidGeometryError):
            Molecule(coords=[[np.inf, 0, 0]], features=[[1.0, 0, 0, 0, 0, 0]],
                     element_ids=["H"])

    def test_edge_set_all_pairs(self):
        edges = EdgeSet(local=[(0, 1), (1, 0)], global_=[(0, 2), (2, 0)])
        assert edges.all_pairs() == [(0, 1), (0, 2), (1, 0), (2, 0)]
