import numpy as np
import pytest

from fovnerf.config import DisplayConfig, LayerFieldConfig, PipelineConfig
from fovnerf.engine import Engine, build_fields_from_config


def desk_config(**overrides) -> PipelineConfig:
    cfg = PipelineConfig(
        fovea=LayerFieldConfig(n_spheres=6, n_layers=2, n_channels=16,
                               bands_per_coord=3),
        periphery=LayerFieldConfig(n_spheres=3, n_layers=2, n_channels=16,
                                   bands_per_coord=3),
        display=DisplayConfig(width=72, height=80),
        layer_scale=1 / 8,
        contrast_k=0.0,  # keep desk frames fast by default
    )
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


@pytest.fixture(scope="session")
def desk_engine() -> Engine:
    cfg = desk_config()
    fields = build_fields_from_config(cfg, r_near=1.0, r_far=6.0, seed=0)
    return Engine(cfg, fields)
