"""Neural field: an MLP approximating color+opacity on the grid spheres."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from numpy.typing import NDArray

from . import mlp
from .encoding import EncodingConfig, encode, normalize_spherical
from .errors import OutOfDomainError
from .mlp import MlpConfig, Params
from .sphgeom import ConcentricGrid, SphericalPoint

LAYER_TAGS = ("fovea", "mid", "far")


@dataclass(frozen=True)
class FieldSample:
    """Network output at one spherical position: color in [0,1]^3, opacity in [0,1]."""

    color: tuple[float, float, float]
    density: float


@dataclass
class NeuralField:
    encoding: EncodingConfig
    mlp: MlpConfig
    params: Params
    grid: ConcentricGrid
    layer_tag: str = "fovea"
    # instrumentation: number of MLP point evaluations since construction/reset
    eval_count: int = dc_field(default=0, repr=False)

    def __post_init__(self) -> None:
        if self.layer_tag not in LAYER_TAGS:
            raise ValueError(f"layer_tag must be one of {LAYER_TAGS}")
        expected = self.mlp.weight_shapes(self.encoding.width)
        actual = [tuple(w.shape) for w in self.params[0::2]]
        if actual != expected:
            raise ValueError(f"weight shapes {actual} do not match config {expected}")

    @staticmethod
    def create(
        grid: ConcentricGrid,
        layer_tag: str = "fovea",
        encoding: EncodingConfig | None = None,
        mlp_cfg: MlpConfig | None = None,
        seed: int = 0,
        dtype=np.float32,
    ) -> "NeuralField":
        encoding = encoding or EncodingConfig()
        mlp_cfg = mlp_cfg or MlpConfig(n_layers=4, n_channels=128)
        rng = np.random.default_rng(seed)
        params = mlp.init_params(mlp_cfg, encoding.width, rng, dtype=dtype)
        return NeuralField(encoding=encoding, mlp=mlp_cfg, params=params,
                           grid=grid, layer_tag=layer_tag)

    @property
    def dtype(self):
        return self.params[0].dtype

    def astype(self, dtype) -> "NeuralField":
        """Copy of the field with parameters cast to dtype (e.g. float64 for checks)."""
        return NeuralField(
            encoding=self.encoding,
            mlp=self.mlp,
            params=[p.astype(dtype) for p in self.params],
            grid=self.grid,
            layer_tag=self.layer_tag,
        )

    def validate_radii(self, radius: NDArray[np.float64]) -> None:
        rel = np.min(
            np.abs(np.asarray(radius)[..., None] - self.grid.radii_array)
            / self.grid.radii_array,
            axis=-1,
        )
        if np.any(rel > 1e-6):
            raise OutOfDomainError("query radius does not lie on a grid sphere")

    def encode_coords(
        self,
        radius: NDArray[np.float64],
        theta: NDArray[np.float64],
        phi: NDArray[np.float64],
    ) -> NDArray:
        coords = normalize_spherical(radius, theta, phi, self.grid.r_near, self.grid.r_far)
        return encode(self.encoding, coords)

    def forward(
        self,
        radius: NDArray[np.float64],
        theta: NDArray[np.float64],
        phi: NDArray[np.float64],
        check_domain: bool = True,
    ) -> NDArray:
        """Evaluate (r, g, b, d) for batches of on-sphere points. Output shape (..., 4)."""
        radius = np.asarray(radius, dtype=np.float64)
        if radius.size == 0:
            raise ValueError("empty batch")
        if check_domain:
            self.validate_radii(radius)
        feats = self.encode_coords(radius, theta, phi)
        flat = feats.reshape(-1, feats.shape[-1])
        out, _ = mlp.forward(self.params, flat)
        self.eval_count += flat.shape[0]
        return out.reshape(*feats.shape[:-1], 4)

    def sample_one(self, p: SphericalPoint) -> FieldSample:
        out = self.forward(
            np.asarray([p.radius]), np.asarray([p.theta]), np.asarray([p.phi])
        )[0]
        return FieldSample(color=(float(out[0]), float(out[1]), float(out[2])),
                           density=float(out[3]))
