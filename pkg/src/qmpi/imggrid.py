"""Image and patch data model.

Images are plain 2-D float64 numpy arrays (row-major, shape ``(height,
width)``). Intensities are nominally in [0, 255]; nothing is clamped or
quantized until the image is finalized from an aggregation buffer or
written to disk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

PAD_MODES = {"mirror": "symmetric", "zero": "constant", "replicate": "edge"}


def validate_image(img) -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting empty or non-finite input."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains NaN or Inf intensities")
    return arr


def read_image(path) -> np.ndarray:
    """Load an 8-bit grayscale PGM (P5) or PNG file as a float64 array."""
    with Image.open(path) as im:
        if im.mode != "L":
            raise ValueError(
                f"{path}: image mode {im.mode!r} is not supported; "
                "only 8-bit grayscale input is accepted"
            )
        return np.asarray(im, dtype=np.float64)


def write_image(path, img) -> None:
    """Write an image as 8-bit grayscale (PGM P5 or PNG, by extension).

    Quantization happens here and only here: values are clamped to
    [0, 255] and rounded to the nearest integer.
    """
    arr = validate_image(img)
    data = np.clip(np.rint(arr), 0.0, 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def pad_image(img, margin: int, mode: str = "mirror") -> np.ndarray:
    """Pad an image on all four sides by ``margin`` pixels.

    ``mirror`` reflects the border rows/columns edge-inclusively,
    ``zero`` fills with 0 and ``replicate`` repeats the edge values.
    The interior of the result always equals the input exactly.
    """
    arr = validate_image(img)
    if margin < 0:
        raise ValueError("margin must be non-negative")
    if mode not in PAD_MODES:
        raise ValueError(f"unknown pad mode {mode!r}; expected one of {sorted(PAD_MODES)}")
    if margin == 0:
        return arr.copy()
    if mode == "mirror" and margin > min(arr.shape):
        raise ValueError(
            f"mirror padding by {margin} exceeds the smallest image dimension {min(arr.shape)}"
        )
    return np.pad(arr, margin, mode=PAD_MODES[mode])


@dataclass(eq=False)
class PatchVector:
    """A square patch flattened row-major, tagged with its source center.

    ``values`` has length ``side**2`` with ``side = 2*P_h + 1``; entry
    ``i`` is the pixel at row ``i // side``, column ``i % side`` of the
    window, matching the neighbor convention of the operator builder.
    """

    values: np.ndarray
    side: int
    center: tuple[int, int]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.side < 1 or self.side % 2 == 0:
            raise ValueError(f"patch side must be a positive odd integer, got {self.side}")
        if self.values.size != self.side * self.side:
            raise ValueError(
                f"patch of side {self.side} needs {self.side**2} values, "
                f"got {self.values.size}"
            )


def extract_patch(img, center: tuple[int, int], p_h: int) -> PatchVector:
    """Read the (2*p_h+1)^2 window around ``center`` row-major.

    The window must lie fully inside ``img``; callers pad beforehand.
    """
    arr = np.asarray(img, dtype=np.float64)
    if p_h < 0:
        raise ValueError("p_h must be non-negative")
    r, c = center
    n = 2 * p_h + 1
    if r - p_h < 0 or c - p_h < 0 or r + p_h >= arr.shape[0] or c + p_h >= arr.shape[1]:
        raise ValueError(
            f"patch window of side {n} at center {center} exceeds image bounds {arr.shape}"
        )
    window = arr[r - p_h : r + p_h + 1, c - p_h : c + p_h + 1]
    return PatchVector(values=window.ravel().copy(), side=n, center=(r, c))


def axis_range(center: int, half: int, stride: int, bound: int) -> range:
    """Stride-spaced coordinates within ``[center-half, center+half]``,
    anchored at ``center`` (always included) and clipped to ``[0, bound)``."""
    lo = max(0, center - half)
    hi = min(bound - 1, center + half)
    j0 = -((center - lo) // stride)
    j1 = (hi - center) // stride
    return range(center + j0 * stride, center + j1 * stride + 1, stride)


def enumerate_window_centers(
    center: tuple[int, int], w_h: int, stride: int, bounds: tuple[int, int]
) -> list[tuple[int, int]]:
    """All patch centers inside the (2*w_h+1)^2 window around ``center``.

    Steps by ``stride`` outward from ``center`` (which is always in the
    result; interaction code excludes it) and clips to the image bounds,
    so the list shrinks near edges.
    """
    if w_h < 0:
        raise ValueError("w_h must be non-negative")
    if stride < 1:
        raise ValueError("stride must be positive")
    rows = axis_range(center[0], w_h, stride, bounds[0])
    cols = axis_range(center[1], w_h, stride, bounds[1])
    return [(r, c) for r in rows for c in cols]


@dataclass(eq=False)
class AggregationBuffer:
    """Running per-pixel sums and hit counts for overlapping patches."""

    sum: np.ndarray
    weight: np.ndarray

    @classmethod
    def zeros(cls, shape: tuple[int, int]) -> "AggregationBuffer":
        return cls(sum=np.zeros(shape, dtype=np.float64), weight=np.zeros(shape, dtype=np.float64))


def accumulate_patch(buf: AggregationBuffer, patch: PatchVector) -> AggregationBuffer:
    """Add a patch into the buffer (in place) with unit weight per pixel."""
    r, c = patch.center
    n = patch.side
    p_h = n // 2
    if r - p_h < 0 or c - p_h < 0 or r + p_h >= buf.sum.shape[0] or c + p_h >= buf.sum.shape[1]:
        raise ValueError(
            f"patch footprint at center {patch.center} exceeds buffer extent {buf.sum.shape}"
        )
    buf.sum[r - p_h : r + p_h + 1, c - p_h : c + p_h + 1] += patch.values.reshape(n, n)
    buf.weight[r - p_h : r + p_h + 1, c - p_h : c + p_h + 1] += 1.0
    return buf


def finalize(buf: AggregationBuffer) -> np.ndarray:
    """Average the accumulated patches and clamp to [0, 255].

    Every pixel must have been covered at least once.
    """
    if (buf.weight <= 0.0).any():
        bad = np.argwhere(buf.weight <= 0.0)[0]
        raise ValueError(f"pixel {tuple(bad)} was never covered by a patch")
    return np.clip(buf.sum / buf.weight, 0.0, 255.0)
