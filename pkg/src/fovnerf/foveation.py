"""Acuity-matched layers, gaze-contingent cameras and stereo-adaptive synthesis.

Three layers cover the visual field: a high-density fovea and mid layer
that follow the gaze, and a head-locked far layer spanning the display's
full FoV. Stereo adaptation renders the fovea per eye but the periphery
once from the central eye (midpoint of the eyes), because peripheral
stereopsis is weak; the compositor later re-introduces an approximate
disparity for the mono layers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError
from .field import NeuralField
from .raymarch import BLACK, PinholeCamera, build_rays, march

log = logging.getLogger(__name__)

EYES = ("left", "right", "central")


@dataclass(frozen=True)
class LayerSpec:
    """One elemental image: full angular width, resolution, gaze behavior."""

    tag: str
    fov_deg: float
    width: int
    height: int
    gaze_locked: bool

    @property
    def ppd(self) -> float:
        """Pixels per degree along the FoV-defining (vertical) axis."""
        return self.height / self.fov_deg

    @property
    def half_fov_deg(self) -> float:
        return self.fov_deg / 2.0


def standard_layers() -> dict[str, LayerSpec]:
    """The production layer set: 6.4 / ~5.7 / ~2.33 pixels per degree."""
    return {
        "fovea": LayerSpec("fovea", 20.0, 128, 128, gaze_locked=True),
        "mid": LayerSpec("mid", 45.0, 256, 256, gaze_locked=True),
        "far": LayerSpec("far", 110.0, 230, 256, gaze_locked=False),
    }


def scaled_layers(scale: float) -> dict[str, LayerSpec]:
    """Resolution-scaled copies for desk-size runs; FoVs (and ratios) unchanged."""
    out = {}
    for tag, spec in standard_layers().items():
        out[tag] = LayerSpec(
            tag, spec.fov_deg,
            max(2, int(round(spec.width * scale))),
            max(2, int(round(spec.height * scale))),
            spec.gaze_locked,
        )
    return out


@dataclass(frozen=True)
class StereoRig:
    """Head pose, interpupillary baseline and gaze direction (head frame)."""

    position: NDArray[np.float64]
    rotation: NDArray[np.float64]  # head-to-world
    ipd: float = 0.064
    gaze_dir: NDArray[np.float64] = dc_field(
        default_factory=lambda: np.asarray([0.0, 0.0, 1.0])
    )

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        g = np.asarray(self.gaze_dir, dtype=np.float64)
        if abs(np.linalg.norm(g) - 1.0) > 1e-9:
            raise ValueError("gaze_dir must be unit-length")
        object.__setattr__(self, "gaze_dir", g)

    @property
    def lateral_axis(self) -> NDArray[np.float64]:
        return self.rotation @ np.asarray([1.0, 0.0, 0.0])

    def eye_position(self, eye: str) -> NDArray[np.float64]:
        if eye == "central":
            return self.position.copy()
        if eye == "left":
            return self.position - 0.5 * self.ipd * self.lateral_axis
        if eye == "right":
            return self.position + 0.5 * self.ipd * self.lateral_axis
        raise ValueError(f"unknown eye {eye!r}")

    @property
    def head_forward(self) -> NDArray[np.float64]:
        return self.rotation @ np.asarray([0.0, 0.0, 1.0])

    @property
    def gaze_world(self) -> NDArray[np.float64]:
        return self.rotation @ self.gaze_dir


def clamp_gaze_to_cone(
    gaze_dir: NDArray[np.float64], max_half_angle_deg: float
) -> tuple[NDArray[np.float64], bool]:
    """Pull a head-frame gaze direction back inside the display cone if needed."""
    g = np.asarray(gaze_dir, dtype=np.float64)
    forward = np.asarray([0.0, 0.0, 1.0])
    cos_max = np.cos(np.radians(max_half_angle_deg))
    c = float(np.dot(g, forward))
    if c >= cos_max:
        return g, False
    # rotate toward forward within the (forward, gaze) plane to the cone edge
    perp = g - c * forward
    norm = np.linalg.norm(perp)
    if norm < 1e-12:  # gaze straight backwards: no unique plane, snap forward
        return forward.copy(), True
    perp /= norm
    ang = np.radians(max_half_angle_deg)
    return np.cos(ang) * forward + np.sin(ang) * perp, True


@dataclass(frozen=True)
class LayerCamera:
    camera: PinholeCamera
    layer: LayerSpec
    eye: str
    gaze_clamped: bool = False


def layer_camera(layer: LayerSpec, rig: StereoRig, eye: str,
                 far_half_fov_deg: float = 55.0) -> LayerCamera:
    """Pinhole camera for one layer and eye.

    Gaze-locked layers aim along the (world) gaze direction; the far layer
    aims along the head forward axis. Eye choice offsets position only.
    A gaze outside the far layer's cone is clamped to the cone edge.
    """
    from .datasets import look_rotation

    if eye not in EYES:
        raise ValueError(f"unknown eye {eye!r}")
    position = rig.eye_position(eye)
    clamped = False
    if layer.gaze_locked:
        gaze, clamped = clamp_gaze_to_cone(rig.gaze_dir, far_half_fov_deg)
        if clamped:
            log.warning("gaze outside the far-layer cone; clamped to the edge")
        forward = rig.rotation @ gaze
    else:
        forward = rig.head_forward
    up_hint = rig.rotation @ np.asarray([0.0, 1.0, 0.0])
    rotation = look_rotation(forward, up_hint)
    cam = PinholeCamera(position=position, rotation=rotation,
                        fov_deg=layer.fov_deg, width=layer.width, height=layer.height)
    return LayerCamera(camera=cam, layer=layer, eye=eye, gaze_clamped=clamped)


@dataclass
class ElementalImage:
    color: NDArray[np.float32]  # (H, W, 3)
    depth: NDArray[np.float64]  # (H, W)
    median_depth: float
    camera: PinholeCamera
    layer: LayerSpec
    eye: str


@dataclass
class ElementalImageSet:
    """The per-frame bundle of layer renders plus its generation snapshot."""

    mode: str  # "adaptive" | "naive-stereo"
    images: dict[str, ElementalImage]  # key "<tag>/<eye>"
    rig: StereoRig
    eval_count: int = 0
    ray_count: int = 0

    def get(self, tag: str, eye: str) -> ElementalImage:
        return self.images[f"{tag}/{eye}"]

    @property
    def fovea_left(self) -> ElementalImage:
        return self.get("fovea", "left")

    @property
    def fovea_right(self) -> ElementalImage:
        return self.get("fovea", "right")


def _passes_for_mode(mode: str) -> list[tuple[str, str]]:
    if mode == "adaptive":
        return [("fovea", "left"), ("fovea", "right"), ("mid", "central"),
                ("far", "central")]
    if mode == "naive-stereo":
        return [("fovea", "left"), ("fovea", "right"), ("mid", "left"),
                ("mid", "right"), ("far", "left"), ("far", "right")]
    raise ConfigError(f"unknown synthesis mode {mode!r}")


def synthesize(
    fields: dict[str, NeuralField],
    rig: StereoRig,
    mode: str = "adaptive",
    layers: dict[str, LayerSpec] | None = None,
    background: NDArray = BLACK,
) -> ElementalImageSet:
    """Render the elemental image set for one frame.

    Adaptive mode runs 4 passes (fovea per eye, mono mid and far); naive
    stereo runs all 6. Instrumentation counts rays marched and MLP point
    evaluations, which the acceptance checks compare against closed-form
    pixel arithmetic.
    """
    layers = layers or standard_layers()
    passes = _passes_for_mode(mode)
    for tag, _ in passes:
        if tag not in fields:
            raise ConfigError(f"no trained field supplied for layer {tag!r}")
    images: dict[str, ElementalImage] = {}
    evals = 0
    rays = 0
    for tag, eye in passes:
        spec = layers[tag]
        lc = layer_camera(spec, rig, eye)
        field = fields[tag]
        batch = build_rays(lc.camera, camera_id=f"{tag}/{eye}")
        before = field.eval_count
        colors, depth, median = march(field, batch, background=background)
        evals += field.eval_count - before
        rays += len(batch)
        images[f"{tag}/{eye}"] = ElementalImage(
            color=colors.reshape(spec.height, spec.width, 3),
            depth=depth.reshape(spec.height, spec.width),
            median_depth=median,
            camera=lc.camera,
            layer=spec,
            eye=eye,
        )
    return ElementalImageSet(mode=mode, images=images, rig=rig,
                             eval_count=evals, ray_count=rays)


def expected_eval_count(mode: str, layers: dict[str, LayerSpec],
                        n_per_tag: dict[str, int]) -> int:
    """Closed form: sum over passes of pixel count x sphere count."""
    return sum(
        layers[tag].width * layers[tag].height * n_per_tag[tag]
        for tag, _ in _passes_for_mode(mode)
    )
