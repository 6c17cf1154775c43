"""Pairwise patch interactions and effective potentials.

Two patches couple through a non-negative per-pixel term proportional to
their absolute pixel difference and inversely proportional to the squared
distance between them. A patch's effective potential is its own pixels
plus the summed interaction with every neighbor in its search window.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imggrid import PatchVector, axis_range

DISTANCE_MODES = ("spatial", "pixel-vector")


def patch_distance(a_center: tuple[int, int], b_center: tuple[int, int]) -> float:
    """Euclidean distance in pixels between two patch centers."""
    return math.hypot(a_center[0] - b_center[0], a_center[1] - b_center[1])


def pairwise_interaction(a: PatchVector, b: PatchVector, distance: float, p: float) -> np.ndarray:
    """Per-pixel coupling ``p * |a_i - b_i| / distance**2``."""
    if a.values.size != b.values.size:
        raise ValueError(
            f"patch lengths differ: {a.values.size} vs {b.values.size}"
        )
    if not distance > 0.0:
        raise ValueError("interaction distance must be positive (self-interaction is excluded)")
    if p < 0.0:
        raise ValueError("proportionality constant p must be non-negative")
    return p * np.abs(a.values - b.values) / (distance * distance)


def total_interaction(
    target: PatchVector,
    neighbors: list[PatchVector],
    p: float,
    distance_mode: str = "spatial",
) -> np.ndarray:
    """Sum of pairwise interactions between ``target`` and ``neighbors``.

    ``distance_mode`` selects the spatial center distance (default) or
    the Euclidean distance between patch pixel vectors. The target itself
    must not appear among the neighbors; in pixel-vector mode a neighbor
    identical to the target contributes zero (the 0/0 limit of the law).
    """
    if distance_mode not in DISTANCE_MODES:
        raise ValueError(f"unknown distance mode {distance_mode!r}")
    total = np.zeros(target.values.size, dtype=np.float64)
    for nb in neighbors:
        if nb.center == target.center:
            raise ValueError(f"neighbor at {nb.center} coincides with the target patch")
        if distance_mode == "spatial":
            dist = patch_distance(target.center, nb.center)
        else:
            dist = float(np.linalg.norm(target.values - nb.values))
            if dist == 0.0:
                continue
        total += pairwise_interaction(target, nb, dist, p)
    return total


def effective_potential(target: PatchVector, total: np.ndarray) -> np.ndarray:
    """Patch pixels plus total interaction, elementwise."""
    tot = np.asarray(total, dtype=np.float64).ravel()
    if tot.size != target.values.size:
        raise ValueError(
            f"interaction length {tot.size} does not match patch length {target.values.size}"
        )
    return target.values + tot


@lru_cache(maxsize=8)
def _inv_square_distance_grid(w_h: int) -> np.ndarray:
    """1/D^2 over all window offsets, with the zero self-offset masked to 0."""
    offs = np.arange(-w_h, w_h + 1, dtype=np.float64)
    d2 = offs[:, None] ** 2 + offs[None, :] ** 2
    inv = np.zeros_like(d2)
    np.divide(1.0, d2, out=inv, where=d2 > 0.0)
    inv.setflags(write=False)
    return inv


def window_interaction(
    padded: np.ndarray,
    center: tuple[int, int],
    *,
    p_h: int,
    w_h: int,
    p: float,
    bounds: tuple[int, int],
    window_stride: int = 1,
    distance_mode: str = "spatial",
) -> np.ndarray:
    """Total interaction for the patch at ``center``, from the padded image.

    Vectorized equivalent of enumerate_window_centers + total_interaction:
    ``padded`` is the image padded by ``p_h``, ``center`` and ``bounds``
    are in original (unpadded) coordinates. Returns a flat vector of
    length (2*p_h+1)^2.
    """
    if distance_mode not in DISTANCE_MODES:
        raise ValueError(f"unknown distance mode {distance_mode!r}")
    n = 2 * p_h + 1
    r, c = center
    rows = axis_range(r, w_h, window_stride, bounds[0])
    cols = axis_range(c, w_h, window_stride, bounds[1])
    view = sliding_window_view(padded, (n, n))
    target = view[r, c]
    nbrs = view[rows.start : rows.stop : rows.step, cols.start : cols.stop : cols.step]
    diff = nbrs - target
    if distance_mode == "spatial":
        grid = _inv_square_distance_grid(w_h)
        inv_d2 = grid[
            rows.start - (r - w_h) : rows.stop - (r - w_h) : window_stride,
            cols.start - (c - w_h) : cols.stop - (c - w_h) : window_stride,
        ]
    else:
        d2 = np.einsum("rcij,rcij->rc", diff, diff)
        inv_d2 = np.zeros_like(d2)
        np.divide(1.0, d2, out=inv_d2, where=d2 > 0.0)
    total = np.tensordot(inv_d2, np.abs(diff), axes=([0, 1], [0, 1]))
    return p * total.ravel()
