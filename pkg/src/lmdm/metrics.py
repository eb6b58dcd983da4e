"""Native molecule-quality metrics: bond inference, valence checks, set stats.

Bonds are inferred from interatomic distances against a bundled table of
reference bond lengths (no cheminformatics dependency), then molecules are
scored by valence rules. Absolute numbers are not comparable to published
benchmarks that use a full cheminformatics toolkit.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .geometry import Molecule, pairwise_distances

# Reference bond lengths in Angstrom, keyed by (element pair, order).
# Values are standard textbook equilibrium lengths.
BOND_LENGTHS: dict[tuple[str, str], dict[int, float]] = {
    ("H", "H"): {1: 0.74},
    ("C", "H"): {1: 1.09},
    ("N", "H"): {1: 1.01},
    ("O", "H"): {1: 0.96},
    ("F", "H"): {1: 0.92},
    ("C", "C"): {1: 1.54, 2: 1.34, 3: 1.20},
    ("C", "N"): {1: 1.47, 2: 1.29, 3: 1.16},
    ("C", "O"): {1: 1.43, 2: 1.20, 3: 1.13},
    ("C", "F"): {1: 1.35},
    ("N", "N"): {1: 1.45, 2: 1.25, 3: 1.10},
    ("N", "O"): {1: 1.40, 2: 1.21},
    ("N", "F"): {1: 1.36},
    ("O", "O"): {1: 1.48, 2: 1.21},
    ("O", "F"): {1: 1.42},
    ("F", "F"): {1: 1.42},
}

SINGLE_BOND_MARGIN = 0.10
MULTI_BOND_MARGIN = 0.05

# Allowed valences per element; extras can be passed to molecule_checks.
ALLOWED_VALENCES: dict[str, tuple[int, ...]] = {
    "H": (1,), "C": (4,), "N": (3,), "O": (2,), "F": (1,),
}


class UnsupportedElementError(ValueError):
    """Raised when a molecule contains an element outside the bond table."""


@dataclass
class BondGraph:
    n_atoms: int
    bonds: list[tuple[int, int, int]]  # (i, j, order), i < j
    element_ids: list[str]

    def valences(self) -> list[int]:
        val = [0] * self.n_atoms
        for i, j, order in self.bonds:
            val[i] += order
            val[j] += order
        return val

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n_atoms)]
        for i, j, _ in self.bonds:
            adj[i].append(j)
            adj[j].append(i)
        return adj


@dataclass
class MetricsReport:
    validity: float
    uniqueness: float
    novelty: float
    stability: float
    atom_stability: float
    n_components_hist: dict[int, int] = field(default_factory=dict)

    def as_text(self) -> str:
        rows = [
            ("validity %", self.validity),
            ("uniqueness %", self.uniqueness),
            ("novelty %", self.novelty),
            ("stability %", self.stability),
            ("atom stability %", self.atom_stability),
        ]
        lines = [f"{name:<20s} {value:7.2f}" for name, value in rows]
        hist = " ".join(f"{k}:{v}" for k, v in sorted(self.n_components_hist.items()))
        lines.append(f"{'components':<20s} {hist}")
        return "\n".join(lines)

    def as_records(self) -> list[str]:
        recs = [f"metric=validity value={self.validity:.4f}",
                f"metric=uniqueness value={self.uniqueness:.4f}",
                f"metric=novelty value={self.novelty:.4f}",
                f"metric=stability value={self.stability:.4f}",
                f"metric=atom_stability value={self.atom_stability:.4f}"]
        for k, v in sorted(self.n_components_hist.items()):
            recs.append(f"metric=n_components key={k} count={v}")
        return recs


def _pair_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if (a, b) in BOND_LENGTHS else (b, a)


def infer_bonds(mol: Molecule) -> BondGraph:
    """Distance-threshold bond typing against the reference-length table.

    A pair gets the highest order whose reference length r satisfies
    d <= r + margin (0.1 A for single, 0.05 A for double/triple).
    """
    for el in mol.element_ids:
        if el not in ALLOWED_VALENCES:
            raise UnsupportedElementError(f"element {el!r} not in the bond table")
    d = pairwise_distances(mol.coords)
    bonds = []
    n = mol.n_atoms
    for i in range(n):
        for j in range(i + 1, n):
            key = _pair_key(mol.element_ids[i], mol.element_ids[j])
            table = BOND_LENGTHS.get(key)
            if table is None:
                continue
            for order in sorted(table, reverse=True):
                margin = SINGLE_BOND_MARGIN if order == 1 else MULTI_BOND_MARGIN
                if d[i, j] <= table[order] + margin:
                    bonds.append((i, j, order))
                    break
    return BondGraph(n_atoms=n, bonds=bonds, element_ids=list(mol.element_ids))


def _n_components(graph: BondGraph) -> int:
    adj = graph.adjacency()
    seen = [False] * graph.n_atoms
    comps = 0
    for start in range(graph.n_atoms):
        if seen[start]:
            continue
        comps += 1
        stack = [start]
        seen[start] = True
        while stack:
            node = stack.pop()
            for nb in adj[node]:
                if not seen[nb]:
                    seen[nb] = True
                    stack.append(nb)
    return comps


def molecule_checks(graph: BondGraph, charges=None,
                    extra_valences: dict[str, tuple[int, ...]] | None = None,
                    require_connected: bool = True) -> dict:
    """Valence/connectivity verdicts for one bond graph.

    An atom is stable when its total bond order hits an allowed valence;
    the molecule is valid when no atom exceeds its maximum valence and
    (optionally) the graph is connected; ion-free means every atom is
    saturated and net charge is zero.
    """
    allowed = dict(ALLOWED_VALENCES)
    if extra_valences:
        allowed.update(extra_valences)
    valences = graph.valences()
    stable_atoms = 0
    over_valence = False
    for el, v in zip(graph.element_ids, valences):
        opts = allowed[el]
        if v in opts:
            stable_atoms += 1
        if v > max(opts):
            over_valence = True
    n_comp = _n_components(graph)
    net_charge = float(np.sum(charges)) if charges is not None else 0.0
    valid = not over_valence and (n_comp == 1 or not require_connected)
    ion_free = stable_atoms == graph.n_atoms and abs(net_charge) < 0.5
    return {"valid": valid, "stable_atoms": stable_atoms,
            "ion_free": ion_free, "n_components": n_comp}


def _stable_hash(payload: str) -> str:
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def canonical_hash(graph: BondGraph, n_rounds: int = 8) -> str:
    """Order-independent molecular fingerprint.

    Iterated neighborhood refinement over (element, bond-order multiset):
    each round replaces every atom label with a hash of its own label plus
    the sorted multiset of (bond order, neighbor label) pairs, and the final
    fingerprint is the sorted multiset of atom labels. Invariant under atom
    permutation and rigid motion (geometry enters only through bonds).
    """
    labels = [_stable_hash(el) for el in graph.element_ids]
    neigh: list[list[tuple[int, int]]] = [[] for _ in range(graph.n_atoms)]
    for i, j, order in graph.bonds:
        neigh[i].append((j, order))
        neigh[j].append((i, order))
    for _ in range(n_rounds):
        labels = [
            _stable_hash(labels[i] + "|" + ",".join(
                f"{order}:{labels[j]}" for j, order in
                sorted(neigh[i], key=lambda e: (e[1], labels[e[0]]))))
            for i in range(graph.n_atoms)
        ]
    return _stable_hash(";".join(sorted(labels)))


def set_metrics(generated: list[Molecule], train_hashes: set[str],
                require_connected: bool = True) -> MetricsReport:
    """Validity / uniqueness / novelty / stability over a generated set.

    Uniqueness is taken over valid molecules only; novelty over the unique
    hashes; stability counts ion-free single-component molecules.
    """
    if not generated:
        raise ValueError("need at least one generated molecule")
    n_valid = 0
    n_stable = 0
    stable_atoms = 0
    total_atoms = 0
    valid_hashes: list[str] = []
    comp_hist: Counter[int] = Counter()
    for mol in generated:
        try:
            graph = infer_bonds(mol)
        except UnsupportedElementError:
            comp_hist[0] += 1
            total_atoms += mol.n_atoms
            continue
        checks = molecule_checks(graph, mol.charges,
                                 require_connected=require_connected)
        comp_hist[checks["n_components"]] += 1
        total_atoms += mol.n_atoms
        stable_atoms += checks["stable_atoms"]
        if checks["valid"]:
            n_valid += 1
            valid_hashes.append(canonical_hash(graph))
        if checks["ion_free"] and checks["n_components"] == 1:
            n_stable += 1
    unique = set(valid_hashes)
    novel = unique - train_hashes
    n = len(generated)
    return MetricsReport(
        validity=100.0 * n_valid / n,
        uniqueness=100.0 * len(unique) / n_valid if n_valid else 0.0,
        novelty=100.0 * len(novel) / len(unique) if unique else 0.0,
        stability=100.0 * n_stable / n,
        atom_stability=100.0 * stable_atoms / total_atoms if total_atoms else 0.0,
        n_components_hist=dict(comp_hist),
    )


def hash_molecules(mols: list[Molecule]) -> set[str]:
    return {canonical_hash(infer_bonds(m)) for m in mols}
