"""XYZ file I/O and deterministic toy datasets.

Standard XYZ layout: atom-count line, comment line, then one
"Element x y z" row per atom, coordinates in Angstrom with six decimals on
output. Files may concatenate multiple molecules.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import Molecule
from .metrics import BOND_LENGTHS, _pair_key

DEFAULT_VOCAB = ("H", "C", "N", "O", "F")


class XyzParseError(ValueError):
    """Raised with the offending line number on malformed XYZ input."""


def one_hot_features(element_ids: list[str], vocab=DEFAULT_VOCAB,
                     charges=None) -> np.ndarray:
    n = len(element_ids)
    feats = np.zeros((n, len(vocab) + 1), dtype=np.float64)
    for row, el in enumerate(element_ids):
        if el not in vocab:
            raise XyzParseError(f"unknown element {el!r} (vocab {vocab})")
        feats[row, vocab.index(el)] = 1.0
    if charges is not None:
        feats[:, -1] = charges
    return feats


def read_xyz(path, vocab=DEFAULT_VOCAB) -> list[Molecule]:
    lines = Path(path).read_text().splitlines()
    mols: list[Molecule] = []
    pos = 0
    while pos < len(lines):
        if not lines[pos].strip():
            pos += 1
            continue
        try:
            n = int(lines[pos].strip())
        except ValueError as exc:
            raise XyzParseError(f"line {pos + 1}: expected atom count") from exc
        if pos + 1 + n >= len(lines) + 1 and n > 0:
            pass
        elements: list[str] = []
        coords = np.zeros((n, 3), dtype=np.float64)
        for row in range(n):
            lineno = pos + 2 + row
            if lineno >= len(lines):
                raise XyzParseError(f"line {lineno + 1}: truncated molecule block")
            parts = lines[lineno].split()
            if len(parts) < 4:
                raise XyzParseError(f"line {lineno + 1}: expected 'Element x y z'")
            elements.append(parts[0])
            try:
                coords[row] = [float(v) for v in parts[1:4]]
            except ValueError as exc:
                raise XyzParseError(f"line {lineno + 1}: bad coordinate") from exc
        mols.append(Molecule(coords=coords,
                             features=one_hot_features(elements, vocab),
                             element_ids=elements))
        pos += 2 + n
    return mols


def write_xyz(mols: list[Molecule], path, comment: str = "") -> None:
    blocks = []
    for mol in mols:
        rows = [str(mol.n_atoms), comment]
        for el, xyz in zip(mol.element_ids, mol.coords):
            rows.append(f"{el} {xyz[0]:.6f} {xyz[1]:.6f} {xyz[2]:.6f}")
        blocks.append("\n".join(rows))
    Path(path).write_text("\n".join(blocks) + ("\n" if blocks else ""))


def _chain(elements: list[str], rng: np.random.Generator,
           jitter: float) -> Molecule:
    """Straight chain with table bond lengths; i,i+2 distances stay out of
    bond range so only consecutive atoms bond."""
    coords = np.zeros((len(elements), 3))
    x = 0.0
    for i in range(1, len(elements)):
        key = _pair_key(elements[i - 1], elements[i])
        x += BOND_LENGTHS[key][1]
        coords[i, 0] = x
    coords += rng.uniform(-jitter, jitter, coords.shape)
    return Molecule(coords=coords, features=one_hot_features(elements),
                    element_ids=elements)


def _tetrahedron(elements: list[str], rng: np.random.Generator,
                 jitter: float, side: float = 1.50) -> Molecule:
    """Regular tetrahedral 4-atom cluster; every pair sits in single-bond
    range, so connectivity survives small coordinate noise (each vertex has
    three bonds and only needs one of them)."""
    if len(elements) != 4:
        raise ValueError("tetrahedral cluster needs exactly 4 atoms")
    coords = side / np.sqrt(8.0) * np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    coords += rng.uniform(-jitter, jitter, coords.shape)
    return Molecule(coords=coords, features=one_hot_features(elements),
                    element_ids=list(elements))


def _ring(n: int, rng: np.random.Generator, jitter: float) -> Molecule:
    """Regular all-carbon ring with C-C single-bond sides (n >= 4 keeps
    chords beyond bond range)."""
    side = BOND_LENGTHS[("C", "C")][1]
    radius = side / (2.0 * np.sin(np.pi / n))
    angles = 2.0 * np.pi * np.arange(n) / n
    coords = np.stack([radius * np.cos(angles), radius * np.sin(angles),
                       np.zeros(n)], axis=1)
    coords += rng.uniform(-jitter, jitter, coords.shape)
    return Molecule(coords=coords, features=one_hot_features(["C"] * n),
                    element_ids=["C"] * n)


def make_toy_dataset(kind: str, n: int, seed: int = 0,
                     jitter: float = 0.02) -> list[Molecule]:
    """Deterministic 3-8 atom molecules with chemically plausible geometry.

    kinds: 'chains' (heteroatom-capped carbon chains), 'rings' (carbon
    rings), 'mixed' (alternating), 'clusters' (tetrahedral C/N clusters).
    Every output passes the valence checker.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if kind not in ("chains", "rings", "mixed", "clusters"):
        raise ValueError(f"unknown toy dataset kind {kind!r}")
    rng = np.random.default_rng(seed)
    cluster_templates = [
        ["C", "C", "C", "C"],
        ["C", "C", "C", "N"],
        ["C", "C", "N", "N"],
    ]
    chain_templates = [
        ["O", "C", "C"],
        ["O", "C", "C", "C"],
        ["N", "C", "C", "C", "C"],
        ["O", "C", "C", "C", "C", "C"],
        ["C", "C", "C", "C"],
        ["N", "C", "C", "O"],
    ]
    ring_sizes = [4, 5, 6, 7, 8]
    mols: list[Molecule] = []
    for i in range(n):
        if kind == "clusters":
            mols.append(_tetrahedron(cluster_templates[i % 3], rng, jitter))
        elif kind == "chains" or (kind == "mixed" and i % 2 == 0):
            template = chain_templates[i % len(chain_templates)]
            mols.append(_chain(template, rng, jitter))
        else:
            mols.append(_ring(ring_sizes[i % len(ring_sizes)], rng, jitter))
    return mols
