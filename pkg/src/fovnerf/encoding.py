"""Trigonometric input encoding for spherical positions.

The network never sees raw spherical coordinates. Each position is first
normalized to three unitless coordinates in [0, 1]:

  * inverse radius, mapped over [1/r_far, 1/r_near] (inverse depth spreads
    parallax resolution evenly across spheres),
  * theta / pi,
  * (phi + pi) / (2 pi),

then expanded into sin/cos pairs at octave frequencies 2^j * pi, j < L,
optionally with the raw normalized coordinates appended.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import OutOfDomainError
from .sphgeom import ConcentricGrid, SphericalPoint


@dataclass(frozen=True)
class EncodingConfig:
    bands_per_coord: int = 10
    include_raw: bool = True
    input_coords: int = 3  # (inverse radius, theta, phi)

    def __post_init__(self) -> None:
        if self.bands_per_coord < 1:
            raise ValueError("bands_per_coord must be positive")
        if self.input_coords != 3:
            raise ValueError("encoder is defined for 3 spherical coordinates")

    @property
    def width(self) -> int:
        return self.input_coords * (2 * self.bands_per_coord + (1 if self.include_raw else 0))


def normalize_spherical(
    radius: NDArray[np.float64],
    theta: NDArray[np.float64],
    phi: NDArray[np.float64],
    r_near: float,
    r_far: float,
) -> NDArray[np.float64]:
    """Stack the three normalized coordinates along the last axis."""
    radius = np.asarray(radius, dtype=np.float64)
    inv_span = 1.0 / r_near - 1.0 / r_far
    n_r = (1.0 / radius - 1.0 / r_far) / inv_span
    n_t = np.asarray(theta, dtype=np.float64) / np.pi
    n_p = (np.asarray(phi, dtype=np.float64) + np.pi) / (2.0 * np.pi)
    return np.stack([n_r, n_t, n_p], axis=-1)


def encode(cfg: EncodingConfig, coords: NDArray[np.float64]) -> NDArray[np.float64]:
    """Encode normalized coordinates (..., 3) into features (..., cfg.width).

    Layout: [raw coords if enabled] then per band j: sin(2^j pi c), cos(2^j pi c)
    for the three coordinates.
    """
    coords = np.asarray(coords)
    if not np.all(np.isfinite(coords)):
        raise OutOfDomainError("non-finite coordinates cannot be encoded")
    freqs = (2.0 ** np.arange(cfg.bands_per_coord)) * np.pi
    scaled = coords[..., None, :] * freqs[:, None]  # (..., L, 3)
    parts = []
    if cfg.include_raw:
        parts.append(coords)
    lead = scaled.shape[:-2]
    parts.append(np.sin(scaled).reshape(*lead, -1))
    parts.append(np.cos(scaled).reshape(*lead, -1))
    return np.concatenate(parts, axis=-1)


def encode_point(cfg: EncodingConfig, p: SphericalPoint, grid: ConcentricGrid) -> NDArray[np.float64]:
    """Single-point convenience wrapper used by tests and debugging."""
    if p.radius <= 0:
        raise OutOfDomainError("radius must be positive")
    coords = normalize_spherical(
        np.asarray([p.radius]), np.asarray([p.theta]), np.asarray([p.phi]),
        grid.r_near, grid.r_far,
    )
    return encode(cfg, coords)[0]
