"""Pipeline configuration: YAML-backed dataclasses with validation.

Defaults follow the optimized production settings: fovea 32 spheres with a
4x128 network, periphery 16 spheres with 4x96, 24 ms budget.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import yaml

from .errors import ConfigError

ENV_CONFIG_PATH = "FOVNERF_CONFIG"


@dataclass
class LayerFieldConfig:
    n_spheres: int
    n_layers: int
    n_channels: int
    bands_per_coord: int = 10
    model_path: str = ""

    def validate(self, name: str) -> None:
        for attr in ("n_spheres", "n_layers", "n_channels", "bands_per_coord"):
            v = getattr(self, attr)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name}.{attr} must be a positive integer, got {v!r}")


@dataclass
class DisplayConfig:
    width: int = 1440
    height: int = 1600
    fov_deg: float = 110.0

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ConfigError("display resolution must be positive")
        if not (0 < self.fov_deg < 180):
            raise ConfigError("display fov must be in (0, 180)")


@dataclass
class PipelineConfig:
    fovea: LayerFieldConfig = dc_field(
        default_factory=lambda: LayerFieldConfig(32, 4, 128)
    )
    periphery: LayerFieldConfig = dc_field(
        default_factory=lambda: LayerFieldConfig(16, 4, 96)
    )
    mode: str = "adaptive"
    display: DisplayConfig = dc_field(default_factory=DisplayConfig)
    budget_ms: float = 24.0
    ipd_m: float = 0.064
    layer_scale: float = 1.0  # scales elemental resolutions for desk runs
    r_near: float = 0.0  # 0 = derive from the scene
    r_far: float = 0.0
    contrast_k: float = 0.5
    contrast_sigma_per_deg: float = 0.02
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def validate(self) -> None:
        self.fovea.validate("fovea")
        self.periphery.validate("periphery")
        self.display.validate()
        if self.mode not in ("adaptive", "naive-stereo"):
            raise ConfigError(f"mode must be adaptive or naive-stereo, got {self.mode!r}")
        if self.budget_ms <= 0:
            raise ConfigError("budget_ms must be positive")
        if not (0 < self.layer_scale <= 4):
            raise ConfigError("layer_scale out of range (0, 4]")
        if self.ipd_m < 0:
            raise ConfigError("ipd_m must be non-negative")


_KNOWN_KEYS = {
    "fovea", "periphery", "mode", "display", "budget_ms", "ipd_m",
    "layer_scale", "r_near", "r_far", "contrast_k", "contrast_sigma_per_deg",
    "background",
}


def config_from_dict(data: dict) -> PipelineConfig:
    unknown = set(data) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = PipelineConfig()
    for layer_key in ("fovea", "periphery"):
        if layer_key in data:
            sub = data[layer_key]
            if not isinstance(sub, dict):
                raise ConfigError(f"{layer_key} section must be a mapping")
            base = getattr(cfg, layer_key)
            bad = set(sub) - set(asdict(base))
            if bad:
                raise ConfigError(f"unknown {layer_key} keys: {sorted(bad)}")
            setattr(cfg, layer_key, LayerFieldConfig(**{**asdict(base), **sub}))
    if "display" in data:
        sub = data["display"]
        bad = set(sub) - set(asdict(DisplayConfig()))
        if bad:
            raise ConfigError(f"unknown display keys: {sorted(bad)}")
        cfg.display = DisplayConfig(**{**asdict(DisplayConfig()), **sub})
    for key in _KNOWN_KEYS - {"fovea", "periphery", "display", "background"}:
        if key in data:
            setattr(cfg, key, data[key])
    if "background" in data:
        bg = data["background"]
        if not (isinstance(bg, (list, tuple)) and len(bg) == 3):
            raise ConfigError("background must be a 3-element list")
        cfg.background = tuple(float(v) for v in bg)
    cfg.validate()
    return cfg


def load_config(path: str | Path | None = None) -> PipelineConfig:
    """Load a YAML config; falls back to $FOVNERF_CONFIG, then defaults."""
    if path is None:
        path = os.environ.get(ENV_CONFIG_PATH)
    if path is None:
        return PipelineConfig()
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return config_from_dict(data)


def save_config(cfg: PipelineConfig, path: str | Path) -> None:
    cfg.validate()
    data = asdict(cfg)
    data["background"] = list(cfg.background)
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False))
