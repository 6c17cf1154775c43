"""Patch-based image denoising with interacting per-patch Schrodinger bases.

Each image patch is treated as the potential of a discretized Hamiltonian,
augmented by inverse-square interactions with the patches in its search
window; projecting onto the lowest-energy eigenvectors denoises the patch,
and overlapping reconstructions are averaged back into an image.
"""

from .denoise import (
    DenoiseConfig,
    PatchReconstruction,
    denoise_image,
    denoise_patch_at,
    project_and_truncate,
)
from .hamiltonian import (
    EigenBasis,
    HamiltonianMatrix,
    basis_tile_image,
    build_hamiltonian,
    eigendecompose,
)
from .imggrid import (
    AggregationBuffer,
    PatchVector,
    accumulate_patch,
    enumerate_window_centers,
    extract_patch,
    finalize,
    pad_image,
    read_image,
    validate_image,
    write_image,
)
from .interaction import (
    effective_potential,
    pairwise_interaction,
    patch_distance,
    total_interaction,
    window_interaction,
)
from .noisemetrics import NoiseSpec, QualityReport, add_awgn, psnr, ssim

__version__ = "0.1.0"

__all__ = [
    "AggregationBuffer",
    "DenoiseConfig",
    "EigenBasis",
    "HamiltonianMatrix",
    "NoiseSpec",
    "PatchReconstruction",
    "PatchVector",
    "QualityReport",
    "accumulate_patch",
    "add_awgn",
    "basis_tile_image",
    "build_hamiltonian",
    "denoise_image",
    "denoise_patch_at",
    "effective_potential",
    "eigendecompose",
    "enumerate_window_centers",
    "extract_patch",
    "finalize",
    "pad_image",
    "pairwise_interaction",
    "patch_distance",
    "project_and_truncate",
    "psnr",
    "read_image",
    "ssim",
    "total_interaction",
    "validate_image",
    "window_interaction",
    "write_image",
]
