"""Composite space atom (x) mode1 (x) mode2 and its symmetry sectors.

Basis ordering is row-major with the atom slowest::

    index = (level * (cutoff1 + 1) + n1) * (cutoff2 + 1) + n2

For two-level atoms level 0 is the ground state |-> and level 1 the excited
state |+>.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

SECTOR_TOL = 1e-10


@dataclass(frozen=True)
class HilbertSpace:
    atom_dim: int
    cutoff1: int
    cutoff2: int

    def __post_init__(self):
        if self.atom_dim not in (1, 2, 3):
            raise ValueError(f"unsupported level structure: atom_dim={self.atom_dim} (need 1, 2 or 3)")
        if self.cutoff1 < 0 or self.cutoff2 < 0:
            raise ValueError(f"cutoffs must be >= 0, got ({self.cutoff1}, {self.cutoff2})")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.atom_dim, self.cutoff1 + 1, self.cutoff2 + 1)

    @property
    def total_dim(self) -> int:
        return self.atom_dim * (self.cutoff1 + 1) * (self.cutoff2 + 1)

    @property
    def mode_dim(self) -> int:
        return (self.cutoff1 + 1) * (self.cutoff2 + 1)

    @cached_property
    def labels(self) -> np.ndarray:
        """(total_dim, 3) integer array of (level, n1, n2) per basis index."""
        lv, n1, n2 = np.unravel_index(np.arange(self.total_dim), self.dims)
        return np.stack([lv, n1, n2], axis=1)

    def header(self) -> dict:
        return {"atom_dim": self.atom_dim, "cutoff1": self.cutoff1, "cutoff2": self.cutoff2}

    def grow(self, extra1: int, extra2: int) -> "HilbertSpace":
        return HilbertSpace(self.atom_dim, self.cutoff1 + extra1, self.cutoff2 + extra2)


def build_space(atom_dim: int, cutoff1: int, cutoff2: int) -> HilbertSpace:
    return HilbertSpace(int(atom_dim), int(cutoff1), int(cutoff2))


def basis_index(space: HilbertSpace, atom_level: int, n1: int, n2: int) -> int:
    for name, value, top in (("atom_level", atom_level, space.atom_dim - 1),
                             ("n1", n1, space.cutoff1), ("n2", n2, space.cutoff2)):
        if not 0 <= value <= top:
            raise IndexError(f"{name}={value} outside [0, {top}]")
    return (atom_level * (space.cutoff1 + 1) + n1) * (space.cutoff2 + 1) + n2


def basis_unindex(space: HilbertSpace, index: int) -> tuple[int, int, int]:
    if not 0 <= index < space.total_dim:
        raise IndexError(f"index {index} outside [0, {space.total_dim})")
    lv, n1, n2 = space.labels[index]
    return int(lv), int(n1), int(n2)


@dataclass(frozen=True)
class Sector:
    eigenvalue: float
    member_indices: tuple[int, ...]
    # eigenbasis columns when the conserved operator was not diagonal
    basis: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __len__(self):
        return len(self.member_indices)


def _group_values(values: np.ndarray, tol: float) -> list[tuple[float, np.ndarray]]:
    order = np.argsort(values, kind="stable")
    groups = []
    start = 0
    for i in range(1, len(order) + 1):
        if i == len(order) or values[order[i]] - values[order[start]] > tol:
            idx = np.sort(order[start:i])
            groups.append((float(np.mean(values[idx])), idx))
            start = i
    return groups


def sector_split(space: HilbertSpace, conserved, tol: float = SECTOR_TOL) -> list[Sector]:
    """Partition the basis into eigenspaces of a Hermitian conserved operator.

    A Fock-diagonal operator is split exactly by its diagonal.  Otherwise the
    operator is diagonalized densely; member_indices then list the positions
    of the eigenvectors, and ``Sector.basis`` holds the columns.
    """
    mat = conserved.matrix if hasattr(conserved, "matrix") else sp.csr_matrix(conserved)
    if mat.shape != (space.total_dim, space.total_dim):
        raise ValueError("conserved operator does not act on this space")
    herm_err = abs(mat - mat.conj().T).max() if mat.nnz else 0.0
    if herm_err > 1e-12:
        raise ValueError(f"conserved operator is not Hermitian (max |K - K^dag| = {herm_err:.3e})")
    offdiag = mat - sp.diags(mat.diagonal())
    if offdiag.count_nonzero() == 0 or abs(offdiag).max() == 0:
        diag = mat.diagonal().real
        return [Sector(val, tuple(int(i) for i in idx)) for val, idx in _group_values(diag, tol)]
    evals, evecs = np.linalg.eigh(mat.toarray())
    sectors = []
    for val, idx in _group_values(evals, tol):
        sectors.append(Sector(val, tuple(int(i) for i in idx), basis=evecs[:, idx]))
    return sectors


def joint_labels(space: HilbertSpace, diagonals: list[np.ndarray]) -> list[np.ndarray]:
    """Common refinement of several diagonal quantum numbers -> index groups."""
    if not diagonals:
        return [np.arange(space.total_dim)]
    # 8 decimals: conserved quantities here are sums of integers with O(1) weights
    keys = np.stack([np.round(np.asarray(d).real, 8) for d in diagonals], axis=1)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    return [np.flatnonzero(inverse == g) for g in range(inverse.max() + 1)]
