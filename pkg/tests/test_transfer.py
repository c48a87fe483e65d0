"""Color transfer, texture vectors, and the planar projection."""

from pathlib import Path

import numpy as np
import pytest

import elligrad.transfer as transfer
from elligrad.images import Image, load_image, srgb_to_lab
from elligrad.transfer import color_transfer, mk_map, pca_project, texture_features

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def meadow():
    return load_image(FIXTURES / "meadow.ppm")


@pytest.fixture(scope="module")
def sunset():
    return load_image(FIXTURES / "sunset.ppm")


def noisy_image(seed, h=24, w=32, center=(0.5, 0.5, 0.5), spread=0.12):
    rng = np.random.default_rng(seed)
    base = rng.normal(loc=center, scale=spread, size=(h, w, 3))
    return Image(np.clip(base, 0.0, 1.0))


class TestMkMap:
    def test_equal_scatters_give_identity(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 3))
        sigma = a @ a.T + np.eye(3)
        assert np.allclose(mk_map(sigma, sigma), np.eye(3), atol=1e-12)

    def test_scaled_scatter_gives_scaled_identity(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(4, 4))
        sigma = a @ a.T + np.eye(4)
        t_map = mk_map(sigma, 2.25 * sigma)
        assert np.allclose(t_map, 1.5 * np.eye(4), atol=1e-12)

    def test_map_carries_one_scatter_to_the_other(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
        s_in, s_tgt = a @ a.T + np.eye(3), b @ b.T + np.eye(3)
        t_map = mk_map(s_in, s_tgt)
        assert np.allclose(t_map @ s_in @ t_map, s_tgt, atol=1e-10)
        assert np.allclose(t_map, t_map.T)


class TestColorTransfer:
    @pytest.mark.parametrize("method", ["mm", "fp"])
    @pytest.mark.parametrize("mode", ["3d", "5d"])
    def test_identity_input_equals_output(self, method, mode):
        img = noisy_image(3)
        out, info = color_transfer(img, img, mode, method, seed=7)
        assert np.abs(out.pixels - img.pixels).max() < 1e-6
        assert info.mode == mode and info.method == method

    def test_identity_online_method(self, monkeypatch):
        monkeypatch.setattr(transfer, "ISG_MIN_UPDATES", 4000)
        img = noisy_image(4)
        out, _ = color_transfer(img, img, "3d", "isg", seed=9)
        assert np.abs(out.pixels - img.pixels).max() < 1e-6

    def test_moment_method_matches_target_mean(self):
        src = noisy_image(5, center=(0.35, 0.55, 0.45), spread=0.08)
        tgt = noisy_image(6, center=(0.6, 0.4, 0.5), spread=0.08)
        out, _ = color_transfer(src, tgt, "3d", "mm", seed=1)
        gap = np.abs(out.pixels.reshape(-1, 3).mean(axis=0) - tgt.pixels.reshape(-1, 3).mean(axis=0))
        assert gap.max() < 5e-3

    def test_fixture_pair_mean_shift_with_fp(self, meadow, sunset):
        out, info = color_transfer(meadow, sunset, "3d", "fp", seed=1)
        gap = np.abs(
            out.pixels.reshape(-1, 3).mean(axis=0) - sunset.pixels.reshape(-1, 3).mean(axis=0)
        )
        assert gap.max() < 0.02
        # the full scope reports both estimated shapes
        assert info.theta_input.beta != info.theta_target.beta

    def test_output_dimensions_match_input(self, meadow, sunset):
        out, _ = color_transfer(meadow, sunset, "3d", "mm", seed=0)
        assert out.pixels.shape == meadow.pixels.shape

    def test_5d_moves_color_toward_target(self):
        src = noisy_image(7, center=(0.3, 0.5, 0.4))
        tgt = noisy_image(8, center=(0.6, 0.35, 0.5))
        out, info = color_transfer(src, tgt, "5d", "mm", seed=2)
        assert info.theta_input.beta == 1.0 and info.theta_target.beta == 1.0
        lab_out = srgb_to_lab(out.pixels).reshape(-1, 3).mean(axis=0)
        lab_src = srgb_to_lab(src.pixels).reshape(-1, 3).mean(axis=0)
        lab_tgt = srgb_to_lab(tgt.pixels).reshape(-1, 3).mean(axis=0)
        assert np.linalg.norm(lab_out - lab_tgt) < np.linalg.norm(lab_src - lab_tgt) * 0.2

    def test_subsample_controls_batch_fit_rows(self, meadow, sunset):
        full, _ = color_transfer(meadow, sunset, "3d", "mm", seed=3)
        sub, _ = color_transfer(meadow, sunset, "3d", "mm", seed=3, subsample=2000)
        assert not np.array_equal(full.pixels, sub.pixels)
        assert np.abs(full.pixels - sub.pixels).mean() < 0.05

    def test_failure_names_the_stage(self):
        flat = Image(np.full((8, 8, 3), 0.5))
        healthy = noisy_image(9)
        with pytest.raises(RuntimeError, match="input estimation failed"):
            color_transfer(flat, healthy, "3d", "mm", seed=0)
        with pytest.raises(RuntimeError, match="target estimation failed"):
            color_transfer(healthy, flat, "3d", "mm", seed=0)

    def test_rejects_unknown_mode_and_method(self):
        img = noisy_image(10)
        with pytest.raises(ValueError, match="mode"):
            color_transfer(img, img, "4d", "mm")
        with pytest.raises(ValueError, match="method"):
            color_transfer(img, img, "3d", "sgd")


class TestTextureFeatures:
    def test_eigenvalue_sum_is_channel_count(self, meadow):
        vec = texture_features(meadow, "fp", seed=0)
        assert vec.shape == (7,)
        assert abs(vec[:3].sum() - 3.0) < 1e-10
        assert vec[0] >= vec[1] >= vec[2] > 0

    def test_isotropic_synthetic_image_has_flat_spectrum(self):
        rng = np.random.default_rng(11)
        img = Image(np.clip(rng.normal(0.5, 0.1, size=(256, 256, 3)), 0.0, 1.0))
        vec = texture_features(img, "fp", seed=0)
        assert np.all(np.abs(vec[:3] - 1.0) < 0.05)
        assert np.all(np.abs(vec[3:6] - 0.5) < 0.01)

    def test_online_method_is_deterministic(self, monkeypatch, meadow):
        monkeypatch.setattr(transfer, "ISG_MIN_UPDATES", 4000)
        a = texture_features(meadow, "isg", seed=12)
        b = texture_features(meadow, "isg", seed=12)
        assert np.array_equal(a, b)

    def test_rejects_unknown_method(self, meadow):
        with pytest.raises(ValueError, match="method"):
            texture_features(meadow, "mm")


class TestPcaProject:
    def test_rank_two_data_is_reproduced(self):
        rng = np.random.default_rng(13)
        basis = np.linalg.qr(rng.normal(size=(7, 2)))[0]
        coords = rng.normal(size=(30, 2)) * [3.0, 1.0]
        feats = coords @ basis.T
        proj = pca_project(feats)
        # projecting loses only rotation/reflection: distances survive
        d_orig = np.linalg.norm(coords[:, None] - coords[None, :], axis=-1)
        z = (feats - feats.mean(0)) / feats.std(0)
        d_z = np.linalg.norm(z[:, None] - z[None, :], axis=-1)
        d_proj = np.linalg.norm(proj[:, None] - proj[None, :], axis=-1)
        assert np.allclose(d_proj, d_z, atol=1e-10)

    def test_duplicate_rows_project_identically(self):
        rng = np.random.default_rng(14)
        feats = rng.normal(size=(9, 7))
        feats[4] = feats[2]
        proj = pca_project(feats)
        assert np.array_equal(proj[4], proj[2])

    def test_component_variances_are_ordered(self):
        rng = np.random.default_rng(15)
        proj = pca_project(rng.normal(size=(40, 7)))
        assert proj[:, 0].var() >= proj[:, 1].var()

    def test_sign_convention_is_deterministic(self):
        rng = np.random.default_rng(16)
        feats = rng.normal(size=(12, 7))
        assert np.array_equal(pca_project(feats), pca_project(feats.copy()))

    def test_too_few_rows_rejected(self):
        with pytest.raises(ValueError, match="two feature rows"):
            pca_project(np.ones((1, 7)))
