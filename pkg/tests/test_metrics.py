import numpy as np
import pytest

from fovnerf.compositor import DisplaySpec
from fovnerf.errors import ConfigError
from fovnerf.metrics import banded_quality, psnr, ssim, time_pipeline


class TestPsnrSsim:
    def test_identical_images(self):
        img = np.random.default_rng(0).uniform(0, 1, (32, 32, 3))
        assert psnr(img, img) == np.inf
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)

    def test_black_vs_white_zero_db(self):
        a = np.zeros((16, 16, 3))
        b = np.ones((16, 16, 3))
        assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_matches_reference_implementation(self):
        from skimage.metrics import peak_signal_noise_ratio, structural_similarity

        rng = np.random.default_rng(3)
        a = rng.uniform(0, 1, (48, 40, 3))
        b = np.clip(a + rng.normal(0, 0.08, a.shape), 0, 1)
        assert psnr(a, b) == pytest.approx(
            peak_signal_noise_ratio(a, b, data_range=1.0), abs=1e-6
        )
        want = structural_similarity(
            a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
            use_sample_covariance=False, channel_axis=-1,
        )
        assert ssim(a, b) == pytest.approx(want, abs=1e-6)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(0, 1, (32, 32))
        b = rng.uniform(0, 1, (32, 32))
        assert psnr(a, b) == psnr(b, a)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            psnr(np.zeros((4, 4)), np.zeros((5, 4)))


class TestBandedQuality:
    DISPLAY = DisplaySpec(width=80, height=88, fov_deg=110.0)

    def center_gaze(self):
        return (self.DISPLAY.width / 2 - 0.5, self.DISPLAY.height / 2 - 0.5)

    def test_reference_vs_itself_perfect(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 1, (88, 80, 3))
        rep = banded_quality(img, img, self.DISPLAY, self.center_gaze())
        present = [i for i, n in enumerate(rep.pixel_counts) if n > 0]
        assert present  # at least the central bands exist
        for i in present:
            assert rep.psnr_db[i] == np.inf
            assert rep.ssim_scores[i] == pytest.approx(1.0, abs=1e-9)

    def test_bands_partition_pixels(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 1, (88, 80, 3))
        rep = banded_quality(img, img, self.DISPLAY, self.center_gaze())
        assert sum(rep.pixel_counts) == 88 * 80
        edges = rep.band_edges_deg
        assert edges[0] == 0.0 and edges[-1] == pytest.approx(110.0)
        assert len(edges) == 23  # 22 five-degree bands

    def test_fovea_corruption_stays_in_central_bands(self):
        rng = np.random.default_rng(2)
        ref = rng.uniform(0.3, 0.7, (88, 80, 3))
        bad = ref.copy()
        cx, cy = self.center_gaze()
        bad[int(cy) - 2 : int(cy) + 2, int(cx) - 2 : int(cx) + 2] = 0.0
        rep = banded_quality(bad, ref, self.DISPLAY, self.center_gaze())
        assert rep.psnr_db[0] < 30
        for i, n in enumerate(rep.pixel_counts):
            if i >= 2 and n > 0:  # beyond 10 deg the frame is untouched
                assert rep.psnr_db[i] == np.inf

    def test_peripheral_blur_degrades_outer_bands(self):
        from scipy import ndimage

        rng = np.random.default_rng(5)
        ref = rng.uniform(0, 1, (88, 80, 3))
        blurred = ndimage.gaussian_filter(ref, (2.5, 2.5, 0))
        cx, cy = self.center_gaze()
        mixed = ref.copy()
        # blur only beyond ~15 deg eccentricity
        cam = self.DISPLAY.camera(np.zeros(3), np.eye(3))
        dirs = cam.pixel_directions()
        g = dirs[int(round(cy)), int(round(cx))]
        ecc = np.degrees(np.arccos(np.clip(dirs @ g, -1, 1)))
        mixed[ecc > 15.0] = blurred[ecc > 15.0]
        rep = banded_quality(mixed, ref, self.DISPLAY, self.center_gaze())
        inner = rep.psnr_db[0]
        outer = [p for p, n in zip(rep.psnr_db[4:], rep.pixel_counts[4:]) if n > 0]
        assert inner == np.inf
        assert all(p < 40 for p in outer)

    def test_gaze_outside_frame_rejected(self):
        img = np.zeros((88, 80, 3))
        with pytest.raises(ConfigError):
            banded_quality(img, img, self.DISPLAY, (500.0, 10.0))


class TestTimePipeline:
    def test_requires_twenty_frames(self, desk_engine):
        with pytest.raises(ConfigError):
            time_pipeline(desk_engine, n_frames=5, mode="adaptive")

    def test_timing_modes_and_monotone_under_sleep(self, desk_engine):
        tb = time_pipeline(desk_engine, n_frames=20, mode="adaptive", warmup=2)
        assert tb.total_ms > 0
        assert tb.mode == "adaptive"
        # injected per-stage sleep must move the measured stage mean
        desk_engine.stage_delay_ms["fovea"] = 3.0
        slowed = time_pipeline(desk_engine, n_frames=20, mode="adaptive", warmup=2)
        desk_engine.stage_delay_ms.clear()
        assert slowed.foveal_infer_per_eye_ms >= tb.foveal_infer_per_eye_ms + 2.0
        assert slowed.total_ms > tb.total_ms

    def test_serial_mode_consistency(self):
        # heavier engine so stage work dominates loop overhead
        from tests.conftest import desk_config
        from fovnerf.config import LayerFieldConfig
        from fovnerf.engine import Engine, build_fields_from_config

        cfg = desk_config()
        cfg.fovea = LayerFieldConfig(8, 2, 32, bands_per_coord=4)
        cfg.periphery = LayerFieldConfig(4, 2, 32, bands_per_coord=4)
        cfg.layer_scale = 1 / 4
        engine = Engine(cfg, build_fields_from_config(cfg, 1.0, 6.0, seed=0))
        tb = time_pipeline(engine, n_frames=20, mode="naive-stereo", warmup=3)
        assert tb.total_ms == pytest.approx(tb.serial_stage_sum_ms(), rel=0.05)
