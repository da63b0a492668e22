"""Image-based composition of elemental images into display frames.

Per display pixel, layer weights form a partition of unity driven by
eccentricity from the gaze direction: the inner layer keeps full weight up
to 60% of its angular half-extent, ramps down with a smooth-step across
the remaining 40% band, and hands off to the next layer outward. The mono
mid/far images are first shifted horizontally toward each eye according to
the approximate foveal depth, then resampled bilinearly by direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from .errors import ConfigError
from .foveation import ElementalImage, ElementalImageSet, StereoRig
from .raymarch import PinholeCamera

FOVEA_HALF_DEG = 10.0
MID_HALF_DEG = 22.5


@dataclass(frozen=True)
class DisplaySpec:
    width: int = 1440
    height: int = 1600
    fov_deg: float = 110.0

    def camera(self, position: NDArray, rotation: NDArray) -> PinholeCamera:
        return PinholeCamera(position=position, rotation=rotation,
                             fov_deg=self.fov_deg, width=self.width, height=self.height)


@dataclass
class DisplayFrame:
    left: NDArray[np.float32]
    right: NDArray[np.float32]
    gaze_px: tuple[float, float]
    timings_ms: dict[str, float] = dc_field(default_factory=dict)


def smoothstep(e0: float, e1: float, x: NDArray) -> NDArray:
    t = np.clip((np.asarray(x, dtype=np.float64) - e0) / (e1 - e0), 0.0, 1.0)
    return 3.0 * t * t - 2.0 * t * t * t


def inner_layer_weight(ecc_deg: NDArray, half_fov_deg: float,
                       band_fraction: float = 0.4) -> NDArray:
    """1 inside 60% of the half-extent, smooth-step down to 0 at the edge."""
    start = (1.0 - band_fraction) * half_fov_deg
    return 1.0 - smoothstep(start, half_fov_deg, ecc_deg)


def layer_weights(ecc_deg: NDArray) -> tuple[NDArray, NDArray, NDArray]:
    """(fovea, mid, far) weights; sums to 1 everywhere by construction."""
    wf = inner_layer_weight(ecc_deg, FOVEA_HALF_DEG)
    wm_raw = inner_layer_weight(ecc_deg, MID_HALF_DEG)
    wm = (1.0 - wf) * wm_raw
    wp = (1.0 - wf) * (1.0 - wm_raw)
    return wf, wm, wp


def _sample_bilinear(img: NDArray, u: NDArray, v: NDArray) -> NDArray:
    """Edge-clamped bilinear taps at fractional pixel coords (u cols, v rows)."""
    h, w = img.shape[:2]
    u = np.clip(u, 0.0, w - 1.0)
    v = np.clip(v, 0.0, h - 1.0)
    u0 = np.floor(u).astype(np.intp)
    v0 = np.floor(v).astype(np.intp)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = (u - u0)[..., None]
    fv = (v - v0)[..., None]
    top = img[v0, u0] * (1 - fu) + img[v0, u1] * fu
    bot = img[v1, u0] * (1 - fu) + img[v1, u1] * fu
    return top * (1 - fv) + bot * fv


def sample_layer_by_direction(
    image: NDArray,
    camera: PinholeCamera,
    dirs_world: NDArray,
    edge_slack_deg: float = 0.5,
) -> tuple[NDArray, NDArray]:
    """Resample a layer image along world directions (position ignored).

    Returns (colors, inside) where ``inside`` allows the given angular
    slack beyond the frustum edge (those taps clamp to the border).
    """
    local = dirs_world @ camera.rotation
    z = local[..., 2]
    ok = z > 1e-9
    zs = np.where(ok, z, 1.0)
    x_t = local[..., 0] / zs / camera.tan_half_x
    y_t = local[..., 1] / zs / camera.tan_half_y
    slack = 1.0 + np.radians(edge_slack_deg) / np.radians(camera.fov_deg / 2.0)
    inside = ok & (np.abs(x_t) <= slack) & (np.abs(y_t) <= slack)
    u = (x_t + 1.0) * 0.5 * camera.width - 0.5
    v = (1.0 - y_t) * 0.5 * camera.height - 0.5
    return _sample_bilinear(image, u, v), inside


def disparity_shift(
    image: NDArray,
    median_depth: float,
    rig: StereoRig,
    eye: str,
    ppd: float,
) -> NDArray:
    """Shift a mono (central-eye) image horizontally toward one eye.

    The angular shift is atan((ipd/2) / median_depth); content moves right
    for the left eye and left for the right eye. Infinite or non-positive
    depth means no shift.
    """
    if eye == "central" or rig.ipd == 0.0:
        return image
    if not np.isfinite(median_depth) or median_depth <= 0.0:
        return image
    delta_deg = np.degrees(np.arctan((rig.ipd / 2.0) / median_depth))
    shift_px = delta_deg * ppd
    if eye == "right":
        shift_px = -shift_px
    shifted = np.empty_like(image)
    for c in range(image.shape[2]):
        ndimage.shift(image[..., c], (0.0, shift_px), output=shifted[..., c],
                      order=1, mode="nearest", prefilter=False)
    return shifted


def eccentricity_map_deg(display: DisplaySpec, rig: StereoRig,
                         eye: str) -> NDArray:
    """Per-pixel angle (degrees) between the pixel direction and the gaze."""
    cam = display.camera(rig.eye_position(eye), rig.rotation)
    dirs = cam.pixel_directions()
    cosang = np.clip(dirs @ rig.gaze_world, -1.0, 1.0)
    return np.degrees(np.arccos(cosang))


def _periphery_images(image_set: ElementalImageSet, eye: str) -> tuple[ElementalImage, ElementalImage]:
    if image_set.mode == "adaptive":
        return image_set.get("mid", "central"), image_set.get("far", "central")
    return image_set.get("mid", eye), image_set.get("far", eye)


def blend_eye(
    image_set: ElementalImageSet,
    rig: StereoRig,
    display: DisplaySpec,
    eye: str,
) -> NDArray[np.float32]:
    """Composite one eye's display image from the elemental set."""
    fovea = image_set.get("fovea", eye)
    mid, far = _periphery_images(image_set, eye)
    foveal_depth = fovea.median_depth

    cam = display.camera(rig.eye_position(eye), rig.rotation)
    dirs = cam.pixel_directions()
    ecc = np.degrees(
        np.arccos(np.clip(dirs @ rig.gaze_world, -1.0, 1.0))
    )
    wf, wm, wp = layer_weights(ecc)

    mid_img = mid.color
    far_img = far.color
    if image_set.mode == "adaptive":
        mid_img = disparity_shift(mid_img, foveal_depth, rig, eye, mid.layer.ppd)
        far_img = disparity_shift(far_img, foveal_depth, rig, eye, far.layer.ppd)

    f_col, _ = sample_layer_by_direction(fovea.color, fovea.camera, dirs)
    m_col, _ = sample_layer_by_direction(mid_img, mid.camera, dirs)
    p_col, p_in = sample_layer_by_direction(far_img, far.camera, dirs)

    out = (
        wf[..., None] * f_col + wm[..., None] * m_col + wp[..., None] * p_col
    )
    out = np.where(p_in[..., None], out, 0.0)  # beyond the rendered FoV: black
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def blend(
    image_set: ElementalImageSet,
    rig: StereoRig,
    display: DisplaySpec,
) -> DisplayFrame:
    """Produce the stereo display frame (no contrast pass; see enhance_contrast)."""
    required = {"fovea/left", "fovea/right"}
    if not required <= set(image_set.images):
        raise ConfigError("elemental image set is missing foveal images")
    left = blend_eye(image_set, rig, display, "left")
    right = blend_eye(image_set, rig, display, "right")
    cam = display.camera(rig.position, rig.rotation)
    gaze_uv, in_front = cam.project(rig.position + rig.gaze_world)
    gaze_px = (float(gaze_uv[0]), float(gaze_uv[1])) if in_front else (np.nan, np.nan)
    return DisplayFrame(left=left, right=right, gaze_px=gaze_px)


def gaussian_kernel(sigma: float) -> NDArray:
    """Normalized Gaussian taps truncated at 3 sigma."""
    radius = int(np.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (xs / sigma) ** 2)
    return kernel / kernel.sum()


def gaussian_blur(image: NDArray, sigma: float) -> NDArray:
    """Separable Gaussian with clamp-to-edge padding; sigma <= 0 is identity."""
    if sigma <= 0.0:
        return image.astype(np.float64, copy=True)
    kernel = gaussian_kernel(sigma)
    out = image.astype(np.float64, copy=True)
    for axis in (0, 1):
        out = ndimage.convolve1d(out, kernel, axis=axis, mode="nearest")
    return out


def unsharp_enhance(image: NDArray, sigma: float, k: float) -> NDArray:
    """out = blur + (in - blur) * (1 + k), computed as in + k*(in - blur)."""
    blur = gaussian_blur(image, sigma)
    return image + k * (image - blur)


def enhance_contrast(
    frame: DisplayFrame,
    rig: StereoRig,
    display: DisplaySpec,
    k: float = 0.5,
    sigma_per_deg: float = 0.02,
    onset_deg: float = FOVEA_HALF_DEG,
    n_levels: int = 4,
) -> DisplayFrame:
    """Unsharp-boost the periphery; blur radius grows linearly with eccentricity.

    Pixels at eccentricity <= onset keep their exact input values; with
    k == 0 the whole frame is bit-identical to the input.
    """
    new = {}
    for eye, img in (("left", frame.left), ("right", frame.right)):
        ecc = eccentricity_map_deg(display, rig, eye)
        sigma = sigma_per_deg * np.maximum(0.0, ecc - onset_deg)
        max_sigma = float(sigma.max())
        out = img.astype(np.float64, copy=True)
        if k != 0.0 and max_sigma > 0.0:
            edges = np.linspace(0.0, max_sigma, n_levels + 1)
            centers = 0.5 * (edges[:-1] + edges[1:])
            levels = np.clip(np.digitize(sigma, edges[1:-1]), 0, n_levels - 1)
            for lv in range(n_levels):
                mask = (levels == lv) & (ecc > onset_deg)
                if not mask.any() or centers[lv] <= 0.0:
                    continue
                enhanced = unsharp_enhance(img.astype(np.float64), centers[lv], k)
                out[mask] = enhanced[mask]
            out = np.clip(out, 0.0, 1.0)
        new[eye] = out.astype(np.float32)
    return DisplayFrame(left=new["left"], right=new["right"],
                        gaze_px=frame.gaze_px, timings_ms=dict(frame.timings_ms))


def anaglyph(frame: DisplayFrame) -> NDArray[np.float32]:
    """Red from the left eye, green and blue from the right."""
    out = np.empty_like(frame.left)
    out[..., 0] = frame.left[..., 0]
    out[..., 1] = frame.right[..., 1]
    out[..., 2] = frame.right[..., 2]
    return out
