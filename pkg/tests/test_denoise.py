import os

import numpy as np
import pytest

from naive_reference import naive_denoise
from qmpi import denoise as denoise_mod
from qmpi.denoise import (
    DenoiseConfig,
    denoise_image,
    denoise_patch_at,
    project_and_truncate,
)
from qmpi.hamiltonian import build_hamiltonian, eigendecompose
from qmpi.imggrid import PatchVector
from qmpi.noisemetrics import add_awgn, psnr


def random_basis(dim, seed=0):
    rng = np.random.default_rng(seed)
    side = int(round(np.sqrt(dim)))
    return eigendecompose(build_hamiltonian(rng.uniform(0, 255, dim), side, 1.5))


class TestDenoiseConfig:
    def test_valid_defaults(self):
        cfg = DenoiseConfig(p_h=3, w_h=10, d=11, p=0.085, kinetic=1.53)
        assert cfg.patch_side == 7
        assert cfg.patch_dim == 49
        assert cfg.stride == 1 and cfg.window_stride == 1
        assert cfg.distance_mode == "spatial" and cfg.pad_mode == "mirror"

    @pytest.mark.parametrize("d", [0, 50, -1])
    def test_d_out_of_range(self, d):
        with pytest.raises(ValueError, match="1 <= d <= P_dim"):
            DenoiseConfig(p_h=3, w_h=10, d=d, p=0.1, kinetic=1.0)

    def test_other_invalid_fields(self):
        with pytest.raises(ValueError, match="kinetic"):
            DenoiseConfig(p_h=1, w_h=2, d=1, p=0.1, kinetic=0.0)
        with pytest.raises(ValueError, match="p must"):
            DenoiseConfig(p_h=1, w_h=2, d=1, p=-0.1, kinetic=1.0)
        with pytest.raises(ValueError, match="stride"):
            DenoiseConfig(p_h=1, w_h=2, d=1, p=0.1, kinetic=1.0, stride=4)
        with pytest.raises(ValueError, match="distance_mode"):
            DenoiseConfig(p_h=1, w_h=2, d=1, p=0.1, kinetic=1.0, distance_mode="l2")

    def test_narrow_window_warns(self):
        with pytest.warns(UserWarning, match="narrower"):
            DenoiseConfig(p_h=3, w_h=1, d=5, p=0.1, kinetic=1.0)


class TestProjectAndTruncate:
    def test_full_basis_reproduces_patch(self):
        rng = np.random.default_rng(1)
        patch = PatchVector(values=rng.uniform(0, 255, 49), side=7, center=(0, 0))
        rec = project_and_truncate(patch, random_basis(49), 49)
        assert np.abs(rec.values - patch.values).max() <= 1e-8

    def test_single_pixel(self):
        patch = PatchVector(values=np.array([42.0]), side=1, center=(0, 0))
        rec = project_and_truncate(patch, random_basis(1), 1)
        assert rec.values.tolist() == [42.0]
        assert rec.coefficients.shape == (1,)

    def test_orthogonal_mode_projects_to_zero(self):
        basis = random_basis(9, seed=3)
        patch = PatchVector(values=basis.vectors[:, 3].copy(), side=3, center=(0, 0))
        rec = project_and_truncate(patch, basis, 2)
        assert np.abs(rec.values).max() <= 1e-12

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        basis = random_basis(25, seed=5)
        patch = PatchVector(values=rng.uniform(0, 255, 25), side=5, center=(0, 0))
        once = project_and_truncate(patch, basis, 7)
        again = project_and_truncate(
            PatchVector(values=once.values, side=5, center=(0, 0)), basis, 7
        )
        assert np.abs(again.coefficients - once.coefficients).max() <= 1e-10
        assert np.abs(again.values - once.values).max() <= 1e-10

    def test_parseval_bound(self):
        rng = np.random.default_rng(4)
        basis = random_basis(49, seed=6)
        values = rng.uniform(0, 255, 49)
        patch = PatchVector(values=values, side=7, center=(0, 0))
        for d in (1, 5, 22, 49):
            rec = project_and_truncate(patch, basis, d)
            assert (rec.coefficients ** 2).sum() <= (values ** 2).sum() * (1 + 1e-12)

    def test_error_monotone_in_d(self):
        rng = np.random.default_rng(5)
        basis = random_basis(49, seed=7)
        values = rng.uniform(0, 255, 49)
        patch = PatchVector(values=values, side=7, center=(0, 0))
        errors = [
            ((project_and_truncate(patch, basis, d).values - values) ** 2).sum()
            for d in range(1, 50)
        ]
        assert all(a >= b - 1e-9 for a, b in zip(errors, errors[1:]))

    def test_d_out_of_range(self):
        patch = PatchVector(values=np.zeros(9), side=3, center=(0, 0))
        with pytest.raises(ValueError, match="1 <= d"):
            project_and_truncate(patch, random_basis(9), 0)
        with pytest.raises(ValueError, match="1 <= d"):
            project_and_truncate(patch, random_basis(9), 10)


class TestConstantImage:
    # frozen from the closed-form oracle: the ground state of a constant
    # patch is the outer product of sines, so the d=1 pipeline output is
    # v * (sum s)^2 * mean-aggregated psi0, about 0.8148*v in the interior
    INTERIOR_D1 = 0.814773306751197
    MAX_REL_RESID_D1 = 0.18522669324880303

    def test_full_d_reproduces(self):
        img = np.full((16, 16), 200.0)
        cfg = DenoiseConfig(p_h=3, w_h=10, d=49, p=0.085, kinetic=1.53)
        out = denoise_image(img, cfg, workers=1)
        assert np.abs(out - img).max() <= 1e-6

    def test_d1_matches_sine_oracle(self):
        level = 100.0
        img = np.full((16, 16), level)
        cfg = DenoiseConfig(p_h=3, w_h=10, d=1, p=0.085, kinetic=1.53)
        out = denoise_image(img, cfg, workers=1)
        assert abs(out[8, 8] / level - self.INTERIOR_D1) <= 1e-9
        rel = np.abs(out - level).max() / level
        assert abs(rel - self.MAX_REL_RESID_D1) <= 1e-9


class TestDenoiseImage:
    @pytest.mark.parametrize("mode", ["spatial", "pixel-vector"])
    def test_completeness_identity(self, mode):
        rng = np.random.default_rng(8)
        img = rng.uniform(0, 255, (32, 32))
        cfg = DenoiseConfig(p_h=2, w_h=4, d=25, p=0.3, kinetic=1.5, distance_mode=mode)
        out = denoise_image(img, cfg, workers=1)
        assert np.abs(out - img).max() <= 1e-6

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(9)
        img = rng.uniform(0, 255, (10, 13))
        for mode in ("spatial", "pixel-vector"):
            cfg = DenoiseConfig(p_h=1, w_h=3, d=4, p=0.2, kinetic=2.0, distance_mode=mode)
            ours = denoise_image(img, cfg, workers=1)
            ref = naive_denoise(img, 1, 3, 4, 0.2, 2.0, distance_mode=mode)
            assert np.abs(ours - ref).max() <= 1e-8

    def test_zero_p_equals_stubbed_interactions(self, monkeypatch):
        rng = np.random.default_rng(10)
        img = rng.uniform(0, 255, (20, 20))
        cfg = DenoiseConfig(p_h=2, w_h=4, d=9, p=0.0, kinetic=1.5)
        out_p0 = denoise_image(img, cfg, workers=1)

        def stub(padded, center, *, p_h, **kwargs):
            return np.zeros((2 * p_h + 1) ** 2)

        monkeypatch.setattr(denoise_mod.interaction, "window_interaction", stub)
        out_stub = denoise_image(img, cfg, workers=1)
        assert np.abs(out_p0 - out_stub).max() <= 1e-12

    def test_patch_at_equals_pipeline_internals(self):
        rng = np.random.default_rng(11)
        img = rng.uniform(0, 255, (9, 8))
        cfg = DenoiseConfig(p_h=1, w_h=2, d=3, p=0.4, kinetic=1.5)
        full = denoise_image(img, cfg, workers=1)
        acc = np.zeros((11, 10))
        wgt = np.zeros((11, 10))
        for r in range(9):
            for c in range(8):
                rec = denoise_patch_at(img, (r, c), cfg)
                acc[r : r + 3, c : c + 3] += rec.values.reshape(3, 3)
                wgt[r : r + 3, c : c + 3] += 1.0
        rebuilt = np.clip(acc / wgt, 0, 255)[1:10, 1:9]
        assert np.array_equal(rebuilt, full)

    def test_patch_at_constant_region_full_d(self):
        img = np.full((12, 12), 99.0)
        cfg = DenoiseConfig(p_h=2, w_h=3, d=25, p=0.1, kinetic=1.5)
        rec = denoise_patch_at(img, (6, 6), cfg)
        assert np.abs(rec.values - 99.0).max() <= 1e-8

    def test_patch_at_zero_p_matches_interactions_disabled(self, monkeypatch):
        rng = np.random.default_rng(12)
        img = rng.uniform(0, 255, (12, 12))
        cfg = DenoiseConfig(p_h=2, w_h=4, d=7, p=0.0, kinetic=1.5)
        rec_p0 = denoise_patch_at(img, (5, 6), cfg)

        def stub(padded, center, *, p_h, **kwargs):
            return np.zeros((2 * p_h + 1) ** 2)

        monkeypatch.setattr(denoise_mod.interaction, "window_interaction", stub)
        rec_stub = denoise_patch_at(img, (5, 6), cfg)
        assert np.abs(rec_p0.values - rec_stub.values).max() <= 1e-12

    def test_patch_at_off_grid_center_rejected(self):
        img = np.zeros((12, 12))
        cfg = DenoiseConfig(p_h=1, w_h=2, d=3, p=0.1, kinetic=1.5, stride=3)
        with pytest.raises(ValueError, match="stride"):
            denoise_patch_at(img, (4, 0), cfg)

    def test_mirror_symmetry(self):
        rng = np.random.default_rng(13)
        img = rng.uniform(0, 255, (14, 11))
        cfg = DenoiseConfig(p_h=1, w_h=3, d=4, p=0.15, kinetic=1.5)
        out = denoise_image(img, cfg, workers=1)
        out_flipped = denoise_image(np.fliplr(img), cfg, workers=1)
        assert np.abs(np.fliplr(out_flipped) - out).max() <= 1e-8

    def test_mirror_symmetry_per_patch(self):
        rng = np.random.default_rng(17)
        img = rng.uniform(0, 255, (12, 10))
        flipped = np.fliplr(img)
        cfg = DenoiseConfig(p_h=2, w_h=3, d=6, p=0.15, kinetic=1.5)
        for r, c in [(0, 0), (5, 4), (11, 9), (3, 0)]:
            rec = denoise_patch_at(img, (r, c), cfg).values.reshape(5, 5)
            mirrored = denoise_patch_at(flipped, (r, 9 - c), cfg).values.reshape(5, 5)
            assert np.abs(np.fliplr(mirrored) - rec).max() <= 1e-8

    def test_deterministic_across_worker_counts(self):
        rng = np.random.default_rng(14)
        img = rng.uniform(0, 255, (40, 24))
        cfg = DenoiseConfig(p_h=1, w_h=3, d=5, p=0.2, kinetic=1.5)
        serial = denoise_image(img, cfg, workers=1)
        parallel = denoise_image(img, cfg, workers=2)
        assert serial.tobytes() == parallel.tobytes()

    def test_workers_from_env(self, monkeypatch):
        rng = np.random.default_rng(15)
        img = rng.uniform(0, 255, (20, 20))
        cfg = DenoiseConfig(p_h=1, w_h=2, d=3, p=0.1, kinetic=1.5)
        monkeypatch.setenv("QMPI_THREADS", "2")
        from_env = denoise_image(img, cfg)
        assert from_env.tobytes() == denoise_image(img, cfg, workers=1).tobytes()
        monkeypatch.setenv("QMPI_THREADS", "zero")
        with pytest.raises(ValueError, match="QMPI_THREADS"):
            denoise_image(img, cfg)

    def test_single_pixel_patches_are_identity(self):
        # p_h = 0: the 1x1 operator has eigenvector [1] whatever the
        # effective potential, so d = 1 reproduces every pixel
        rng = np.random.default_rng(18)
        img = rng.uniform(0, 255, (9, 9))
        cfg = DenoiseConfig(p_h=0, w_h=2, d=1, p=0.3, kinetic=1.5)
        assert np.array_equal(denoise_image(img, cfg, workers=1), img)

    def test_stride_covers_image(self):
        rng = np.random.default_rng(16)
        img = rng.uniform(0, 255, (17, 13))
        cfg = DenoiseConfig(p_h=2, w_h=3, d=25, p=0.2, kinetic=1.5, stride=3)
        out = denoise_image(img, cfg, workers=1)  # full d: identity on the grid
        assert out.shape == img.shape
        assert np.abs(out - img).max() <= 1e-6

    def test_progress_callback(self):
        img = np.zeros((20, 20)) + 50.0
        cfg = DenoiseConfig(p_h=1, w_h=2, d=3, p=0.1, kinetic=1.5)
        seen = []
        denoise_image(img, cfg, workers=1, progress=lambda done, total: seen.append((done, total)))
        assert seen == [(i + 1, len(seen)) for i in range(len(seen))]
        assert seen[-1][0] == seen[-1][1]

    def test_eigensolver_failure_names_patch(self, monkeypatch):
        img = np.full((8, 8), 10.0)
        cfg = DenoiseConfig(p_h=1, w_h=2, d=3, p=0.1, kinetic=1.5)

        def boom(ham):
            raise np.linalg.LinAlgError("did not converge")

        monkeypatch.setattr(denoise_mod.hamiltonian, "eigendecompose", boom)
        with pytest.raises(RuntimeError, match=r"patch center \(0, 0\)"):
            denoise_image(img, cfg, workers=1)

    def test_non_finite_input_rejected(self):
        img = np.zeros((8, 8))
        img[3, 3] = np.inf
        cfg = DenoiseConfig(p_h=1, w_h=2, d=3, p=0.1, kinetic=1.5)
        with pytest.raises(ValueError, match="NaN or Inf"):
            denoise_image(img, cfg, workers=1)


class TestDenoisingEffect:
    def test_improves_noisy_piecewise_constant(self):
        # regression value frozen from this pipeline at the given seed;
        # the hard floor is the spec's "strictly better than noisy"
        clean = np.full((64, 64), 64.0)
        clean[16:48, 16:48] = 192.0
        noisy, _ = add_awgn(clean, 8.0, seed=0)
        cfg = DenoiseConfig(p_h=3, w_h=10, d=11, p=0.085, kinetic=1.53)
        out = np.clip(denoise_image(noisy / 255.0, cfg, workers=2) * 255.0, 0, 255)
        gain = psnr(clean, out) - psnr(clean, noisy)
        assert gain > 0.0
        assert gain == pytest.approx(6.683, abs=0.1)
