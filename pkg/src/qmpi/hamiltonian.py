"""Discretized per-patch Hamiltonian and its eigendecomposition.

The operator acts on row-major flattened n x n patches: a 5-point-stencil
kinetic term with Dirichlet (zero-padded) boundary plus the potential on
the diagonal. Couplings that would wrap from the end of one patch row to
the start of the next are excluded; the diagonal keeps the full
``4 * kinetic`` term at every site, boundary included.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SIGN_TOL = 1e-12


@lru_cache(maxsize=8)
def _grid_adjacency(side: int) -> np.ndarray:
    """Boolean adjacency of the side x side grid graph, lexicographic order."""
    path = np.zeros((side, side))
    idx = np.arange(side - 1)
    path[idx, idx + 1] = 1.0
    path[idx + 1, idx] = 1.0
    eye = np.eye(side)
    adj = (np.kron(eye, path) + np.kron(path, eye)) > 0.0
    adj.setflags(write=False)
    return adj


@dataclass(eq=False)
class HamiltonianMatrix:
    """Dense real symmetric operator for one patch."""

    entries: np.ndarray
    side: int
    kinetic: float

    @property
    def dim(self) -> int:
        return self.side * self.side


@dataclass(eq=False)
class EigenBasis:
    """Full spectrum of a HamiltonianMatrix.

    ``energies`` is ascending; ``vectors[:, k]`` is the orthonormal
    eigenvector paired with ``energies[k]``.
    """

    energies: np.ndarray
    vectors: np.ndarray


def build_hamiltonian(potential, side: int, kinetic: float) -> HamiltonianMatrix:
    """Assemble the patch operator from a flattened potential vector.

    Diagonal entries are ``potential[i] + 4*kinetic``; off-diagonal
    entries are ``-kinetic`` on the 5-point stencil (same-row left/right
    neighbors and up/down neighbors ``side`` indices away), 0 elsewhere.
    """
    pot = np.asarray(potential, dtype=np.float64).ravel()
    if side < 1:
        raise ValueError("side must be positive")
    if pot.size != side * side:
        raise ValueError(f"potential length {pot.size} is not side^2 = {side * side}")
    if not np.isfinite(pot).all():
        raise ValueError("potential contains NaN or Inf")
    if not kinetic > 0.0:
        raise ValueError(f"kinetic coefficient must be positive, got {kinetic}")
    entries = np.zeros((side * side, side * side), dtype=np.float64)
    entries[_grid_adjacency(side)] = -kinetic
    np.fill_diagonal(entries, pot + 4.0 * kinetic)
    return HamiltonianMatrix(entries=entries, side=side, kinetic=float(kinetic))


def fix_signs(vectors: np.ndarray, tol: float = SIGN_TOL) -> np.ndarray:
    """Flip eigenvector columns so the first component with absolute
    value above ``tol`` is positive (in place)."""
    lead = (np.abs(vectors) > tol).argmax(axis=0)
    cols = np.arange(vectors.shape[1])
    vectors *= np.where(vectors[lead, cols] < 0.0, -1.0, 1.0)
    return vectors


def eigendecompose(ham: HamiltonianMatrix) -> EigenBasis:
    """Full ordered eigendecomposition of the patch operator.

    Energies ascend; eigenvectors are orthonormal with a deterministic
    sign convention. Solver failures propagate as LinAlgError.
    """
    energies, vectors = np.linalg.eigh(ham.entries)
    fix_signs(vectors)
    return EigenBasis(energies=energies, vectors=vectors)


def basis_tile_image(basis: EigenBasis, pad: int = 1) -> np.ndarray:
    """Render eigenvectors as a tiled image for visual inspection.

    Each eigenvector is reshaped to side x side and min-max normalized to
    [0, 255]; tiles are laid out row-major in energy order on a mid-gray
    background, ``pad`` pixels apart.
    """
    dim = basis.energies.size
    side = int(round(np.sqrt(dim)))
    cols = int(np.ceil(np.sqrt(dim)))
    rows = int(np.ceil(dim / cols))
    canvas = np.full(
        (rows * (side + pad) + pad, cols * (side + pad) + pad), 127.0, dtype=np.float64
    )
    for k in range(dim):
        tile = basis.vectors[:, k].reshape(side, side)
        lo, hi = tile.min(), tile.max()
        span = hi - lo
        tile = (tile - lo) / span * 255.0 if span > 0 else np.full_like(tile, 127.0)
        r0 = pad + (k // cols) * (side + pad)
        c0 = pad + (k % cols) * (side + pad)
        canvas[r0 : r0 + side, c0 : c0 + side] = tile
    return canvas
