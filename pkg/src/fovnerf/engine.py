"""End-to-end frame orchestration: pose and gaze in, display frames out."""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from . import compositor, foveation, model_io
from .compositor import DisplayFrame, DisplaySpec
from .config import PipelineConfig
from .encoding import EncodingConfig
from .errors import ConfigError
from .field import NeuralField
from .foveation import LayerSpec, StereoRig
from .mlp import MlpConfig
from .sphgeom import ConcentricGrid


@dataclass
class SessionState:
    """Per-session input slot with latest-input-wins semantics."""

    latest_rig: StereoRig | None = None
    latest_t_ms: float = -np.inf
    frame_counter: int = 0
    timing_ring: list[dict] = dc_field(default_factory=list)
    ring_size: int = 120

    def offer(self, rig: StereoRig, t_ms: float) -> bool:
        """Accept a pose if it is newer than the current one; stale input drops."""
        if t_ms < self.latest_t_ms:
            return False
        self.latest_rig = rig
        self.latest_t_ms = t_ms
        return True

    def take(self) -> StereoRig | None:
        rig, self.latest_rig = self.latest_rig, None
        return rig

    def record_timing(self, timings: dict) -> None:
        self.timing_ring.append(timings)
        if len(self.timing_ring) > self.ring_size:
            self.timing_ring.pop(0)


class Engine:
    """Holds the trained fields and renders gaze-contingent stereo frames."""

    def __init__(
        self,
        config: PipelineConfig,
        fields: dict[str, NeuralField],
        layers: dict[str, LayerSpec] | None = None,
    ):
        for tag in ("fovea", "mid", "far"):
            if tag not in fields:
                raise ConfigError(f"engine needs a field for layer {tag!r}")
        self.config = config
        self.fields = fields
        self.layers = layers or foveation.scaled_layers(config.layer_scale)
        self.display = DisplaySpec(
            width=config.display.width, height=config.display.height,
            fov_deg=config.display.fov_deg,
        )
        self.background = np.asarray(config.background, dtype=np.float64)
        # test hook: per-stage extra sleep in ms, keyed like timings
        self.stage_delay_ms: dict[str, float] = {}

    @staticmethod
    def from_model_files(config: PipelineConfig, fovea_path: str | Path,
                         mid_path: str | Path, far_path: str | Path,
                         layers: dict[str, LayerSpec] | None = None) -> "Engine":
        fields = {
            "fovea": model_io.load_field_file(fovea_path),
            "mid": model_io.load_field_file(mid_path),
            "far": model_io.load_field_file(far_path),
        }
        return Engine(config, fields, layers)

    def default_rig(self, gaze_dir: NDArray | None = None) -> StereoRig:
        return StereoRig(
            position=np.zeros(3), rotation=np.eye(3), ipd=self.config.ipd_m,
            gaze_dir=np.asarray([0.0, 0.0, 1.0]) if gaze_dir is None else gaze_dir,
        )

    def _sleep_hook(self, stage: str) -> None:
        extra = self.stage_delay_ms.get(stage, 0.0)
        if extra > 0:
            time.sleep(extra / 1e3)

    def render_frame(self, rig: StereoRig, mode: str | None = None) -> DisplayFrame:
        """Synthesize, compose and contrast-enhance one stereo frame.

        Deterministic for fixed weights, pose and gaze. Stage wall times
        land in ``frame.timings_ms`` using per-pass keys plus the Table-
        style aggregates (fovea per eye, periphery per pass, blend, total).
        """
        mode = mode or self.config.mode
        t0 = time.perf_counter()
        # the synthesize pass loop, unrolled so each march is timed individually
        layer_passes = foveation._passes_for_mode(mode)
        images = {}
        evals = 0
        rays = 0
        pass_ms: dict[str, float] = {}
        from .raymarch import build_rays, march

        for tag, eye in layer_passes:
            start = time.perf_counter()
            self._sleep_hook(tag)
            spec = self.layers[tag]
            lc = foveation.layer_camera(spec, rig, eye)
            field = self.fields[tag]
            batch = build_rays(lc.camera, camera_id=f"{tag}/{eye}")
            before = field.eval_count
            colors, depth, median = march(field, batch, background=self.background)
            evals += field.eval_count - before
            rays += len(batch)
            images[f"{tag}/{eye}"] = foveation.ElementalImage(
                color=colors.reshape(spec.height, spec.width, 3),
                depth=depth.reshape(spec.height, spec.width),
                median_depth=median,
                camera=lc.camera,
                layer=spec,
                eye=eye,
            )
            pass_ms[f"{tag}/{eye}"] = (time.perf_counter() - start) * 1e3
        image_set = foveation.ElementalImageSet(
            mode=mode, images=images, rig=rig, eval_count=evals, ray_count=rays
        )

        t_blend = time.perf_counter()
        self._sleep_hook("blend")
        frame = compositor.blend(image_set, rig, self.display)
        if self.config.contrast_k != 0.0:
            frame = compositor.enhance_contrast(
                frame, rig, self.display, k=self.config.contrast_k,
                sigma_per_deg=self.config.contrast_sigma_per_deg,
            )
        blend_ms = (time.perf_counter() - t_blend) * 1e3

        fovea_ms = [v for k, v in pass_ms.items() if k.startswith("fovea/")]
        periph_keys = [k for k in pass_ms if k.startswith(("mid/", "far/"))]
        periph_passes = 2 if mode == "naive-stereo" else 1
        periphery_per_pass = sum(pass_ms[k] for k in periph_keys) / periph_passes
        frame.timings_ms = {
            **pass_ms,
            "fovea_per_eye": float(np.mean(fovea_ms)),
            "periphery_per_eye": periphery_per_pass,
            "blend_contrast": blend_ms,
            "total": (time.perf_counter() - t0) * 1e3,
            "mode": mode,
            "eval_count": evals,
            "ray_count": rays,
        }
        return frame


def build_fields_from_config(
    config: PipelineConfig, r_near: float, r_far: float, seed: int = 0
) -> dict[str, NeuralField]:
    """Randomly initialized fields matching the config (for benches and tests)."""
    fovea_grid = ConcentricGrid.uniform(config.fovea.n_spheres, r_near, r_far)
    periph_grid = ConcentricGrid.uniform(config.periphery.n_spheres, r_near, r_far)
    enc_f = EncodingConfig(bands_per_coord=config.fovea.bands_per_coord)
    enc_p = EncodingConfig(bands_per_coord=config.periphery.bands_per_coord)
    return {
        "fovea": NeuralField.create(
            fovea_grid, "fovea", enc_f,
            MlpConfig(config.fovea.n_layers, config.fovea.n_channels), seed=seed,
        ),
        "mid": NeuralField.create(
            periph_grid, "mid", enc_p,
            MlpConfig(config.periphery.n_layers, config.periphery.n_channels),
            seed=seed + 1,
        ),
        "far": NeuralField.create(
            periph_grid, "far", enc_p,
            MlpConfig(config.periphery.n_layers, config.periphery.n_channels),
            seed=seed + 2,
        ),
    }
