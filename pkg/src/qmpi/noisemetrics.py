"""Seeded AWGN synthesis at a target SNR and full-reference quality metrics.

Noise is generated with numpy's PCG64 generator (``np.random.default_rng``)
so a (seed, image shape) pair reproduces the same field bit-for-bit across
runs. Noisy images are returned unclamped; quantization only ever happens
at file export.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imggrid import validate_image

SNR_CONVENTIONS = ("power", "variance")

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2


@dataclass
class NoiseSpec:
    """Record of one synthesized noise field."""

    snr_db: float
    seed: int
    sigma: float            # closed-form target standard deviation
    realized_sigma: float   # sample standard deviation of the field


@dataclass
class QualityReport:
    psnr_db: float
    ssim: float


def add_awgn(clean, snr_db: float, seed: int, convention: str = "power"):
    """Corrupt an image with zero-mean white Gaussian noise at ``snr_db``.

    With the default ``power`` convention the noise variance is
    ``mean(clean**2) / 10**(snr_db/10)``; ``variance`` uses ``var(clean)``
    as the signal measure instead. Returns ``(noisy, NoiseSpec)``; the
    noisy image is not clamped.
    """
    arr = validate_image(clean)
    if convention not in SNR_CONVENTIONS:
        raise ValueError(f"unknown SNR convention {convention!r}; expected {SNR_CONVENTIONS}")
    signal = float(np.mean(arr * arr)) if convention == "power" else float(np.var(arr))
    if signal <= 0.0:
        raise ValueError(f"image has zero signal {convention}; SNR is undefined")
    sigma = math.sqrt(signal / 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    noise = sigma * rng.standard_normal(arr.shape)
    spec = NoiseSpec(
        snr_db=float(snr_db),
        seed=int(seed),
        sigma=sigma,
        realized_sigma=float(np.std(noise)),
    )
    return arr + noise, spec


def psnr(reference, test, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical images."""
    ref = validate_image(reference)
    tst = validate_image(test)
    if ref.shape != tst.shape:
        raise ValueError(f"image dimensions differ: {ref.shape} vs {tst.shape}")
    mse = float(np.mean((ref - tst) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def _windowed_mean(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    # Gaussian-weighted local means over all fully-interior window positions.
    view = sliding_window_view(img, window.shape)
    return np.tensordot(view, window, axes=([2, 3], [0, 1]))


def ssim(reference, test) -> float:
    """Mean local structural similarity with the reference defaults:
    11x11 Gaussian window (sigma 1.5), C1 = (0.01*255)^2, C2 = (0.03*255)^2."""
    ref = validate_image(reference)
    tst = validate_image(test)
    if ref.shape != tst.shape:
        raise ValueError(f"image dimensions differ: {ref.shape} vs {tst.shape}")
    if min(ref.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image {ref.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} metric window"
        )
    window = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    mu1 = _windowed_mean(ref, window)
    mu2 = _windowed_mean(tst, window)
    var1 = _windowed_mean(ref * ref, window) - mu1 * mu1
    var2 = _windowed_mean(tst * tst, window) - mu2 * mu2
    cov = _windowed_mean(ref * tst, window) - mu1 * mu2
    num = (2.0 * mu1 * mu2 + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu1 * mu1 + mu2 * mu2 + SSIM_C1) * (var1 + var2 + SSIM_C2)
    return float(np.mean(num / den))
