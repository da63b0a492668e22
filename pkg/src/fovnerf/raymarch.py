"""Camera rays, per-sphere sampling and back-to-front compositing.

Each ray is sampled exactly once per grid sphere (the grid is the
sampling). For origins inside a sphere the exit intersection parameter t
grows monotonically with radius, so ascending radius order is ascending t
order; compositing runs back-to-front over that ordering:

    c <- sample.color * sample.density + c * (1 - sample.density)

starting from the configured background. Spheres a ray misses, or whose
radius falls outside the [r_near, r_far] bounds, contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .field import NeuralField
from .sphgeom import ConcentricGrid, cartesian_to_spherical_batch

BLACK = np.zeros(3, dtype=np.float64)


@dataclass(frozen=True)
class PinholeCamera:
    """Pinhole spec: world position, rotation (camera-to-world), full FoV, resolution.

    The FoV spans the image height; the horizontal extent follows from the
    aspect ratio. Camera frame: +x right, +y up, +z forward (a proper
    rotation); image rows run top-down, i.e. row 0 looks toward camera +y.
    """

    position: NDArray[np.float64]
    rotation: NDArray[np.float64]
    fov_deg: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (0.0 < self.fov_deg < 180.0):
            raise ValueError("fov must be in (0, 180) degrees")
        if self.width < 1 or self.height < 1:
            raise ValueError("resolution must be positive")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))

    @property
    def tan_half_y(self) -> float:
        return float(np.tan(np.radians(self.fov_deg) / 2.0))

    @property
    def tan_half_x(self) -> float:
        return self.tan_half_y * self.width / self.height

    def pixel_directions(self) -> NDArray[np.float64]:
        """Unit ray directions through pixel centers, shape (H, W, 3), world frame."""
        xs = (np.arange(self.width) + 0.5) / self.width * 2.0 - 1.0
        ys = 1.0 - (np.arange(self.height) + 0.5) / self.height * 2.0
        dx, dy = np.meshgrid(xs * self.tan_half_x, ys * self.tan_half_y)
        d_cam = np.stack([dx, dy, np.ones_like(dx)], axis=-1)
        d_cam /= np.linalg.norm(d_cam, axis=-1, keepdims=True)
        return d_cam @ self.rotation.T

    def project(self, points: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
        """World points -> pixel coordinates (col, row). Second value: point in front."""
        points = np.asarray(points, dtype=np.float64)
        local = (points - self.position) @ self.rotation
        z = local[..., 2]
        in_front = z > 1e-12
        zs = np.where(in_front, z, 1.0)
        u = (local[..., 0] / zs / self.tan_half_x + 1.0) * 0.5 * self.width - 0.5
        v = (1.0 - local[..., 1] / zs / self.tan_half_y) * 0.5 * self.height - 0.5
        return np.stack([u, v], axis=-1), in_front

    @property
    def forward(self) -> NDArray[np.float64]:
        return self.rotation @ np.array([0.0, 0.0, 1.0])


@dataclass
class RayBatch:
    """One ray per pixel of a target elemental image."""

    origins: NDArray[np.float64]  # (B, 3)
    directions: NDArray[np.float64]  # (B, 3) unit
    pixels: NDArray[np.intp]  # (B, 2) as (row, col)
    camera_id: str = ""

    def __len__(self) -> int:
        return self.origins.shape[0]


def build_rays(camera: PinholeCamera, camera_id: str = "") -> RayBatch:
    """Rays through every pixel center; the center of the image looks along +z."""
    dirs = camera.pixel_directions().reshape(-1, 3)
    rows, cols = np.meshgrid(
        np.arange(camera.height), np.arange(camera.width), indexing="ij"
    )
    pixels = np.stack([rows.ravel(), cols.ravel()], axis=-1)
    origins = np.broadcast_to(camera.position, dirs.shape).copy()
    return RayBatch(origins=origins, directions=dirs, pixels=pixels, camera_id=camera_id)


def grid_intersections(
    grid: ConcentricGrid,
    origins: NDArray[np.float64],
    directions: NDArray[np.float64],
    r_near: float | None = None,
    r_far: float | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.bool_]]:
    """Exit intersections of each ray with every bounded sphere.

    Returns (points (B, N, 3), t (B, N), valid (B, N)) ordered by ascending
    radius, which for exit roots is ascending t. Spheres outside the bounds
    are marked invalid.
    """
    origins = np.asarray(origins, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    r_near = grid.r_near if r_near is None else r_near
    r_far = grid.r_far if r_far is None else r_far
    radii = grid.radii_array
    b = np.einsum("ij,ij->i", origins, directions)[:, None]
    c = np.einsum("ij,ij->i", origins, origins)[:, None] - radii[None, :] ** 2
    disc = b * b - c
    valid = disc >= 0.0
    t = np.where(valid, np.sqrt(np.where(valid, disc, 0.0)) - b, -1.0)
    valid &= t >= 0.0
    valid &= (radii >= r_near) & (radii <= r_far)
    points = origins[:, None, :] + t[..., None] * directions[:, None, :]
    return points, t, valid


def composite_over(
    colors: NDArray,
    alphas: NDArray,
    valid: NDArray[np.bool_],
    background: NDArray,
) -> tuple[NDArray, NDArray]:
    """Back-to-front over-composition of per-sphere samples.

    colors: (B, N, 3), alphas: (B, N), samples ordered front (index 0) to
    back. Invalid samples are treated as fully transparent. Returns
    (color (B, 3), weights (B, N)) where weights are each sample's final
    contribution, alpha_i * prod_{j<i}(1 - alpha_j).
    """
    alphas = np.where(valid, alphas, 0.0)
    bg = np.broadcast_to(np.asarray(background, dtype=colors.dtype), (colors.shape[0], 3))
    out = bg.copy()
    n = alphas.shape[1]
    for i in range(n - 1, -1, -1):
        a = alphas[:, i : i + 1]
        out = colors[:, i, :] * a + out * (1.0 - a)
    trans = np.cumprod(1.0 - alphas, axis=1)
    before = np.concatenate([np.ones_like(alphas[:, :1]), trans[:, :-1]], axis=1)
    weights = alphas * before
    return out, weights


def composite_backward(
    colors: NDArray,
    alphas: NDArray,
    valid: NDArray[np.bool_],
    background: NDArray,
    d_out: NDArray,
) -> tuple[NDArray, NDArray]:
    """Gradients of the composited color wrt per-sample colors and alphas.

    Uses the suffix form: with S_i the composite of samples i..N-1 over the
    background and A_i the transmittance in front of i,

        d out / d color_i = A_i * alpha_i,
        d out / d alpha_i = A_i * (color_i - S_{i+1}).
    """
    alphas = np.where(valid, alphas, 0.0)
    B, n = alphas.shape
    bg = np.broadcast_to(np.asarray(background, dtype=colors.dtype), (B, 3))
    suffix = np.empty((B, n + 1, 3), dtype=colors.dtype)
    suffix[:, n, :] = bg
    for i in range(n - 1, -1, -1):
        a = alphas[:, i : i + 1]
        suffix[:, i, :] = colors[:, i, :] * a + suffix[:, i + 1, :] * (1.0 - a)
    trans = np.cumprod(1.0 - alphas, axis=1)
    before = np.concatenate([np.ones_like(alphas[:, :1]), trans[:, :-1]], axis=1)
    d_colors = d_out[:, None, :] * (before * alphas)[..., None]
    d_alphas = np.einsum(
        "bc,bnc->bn", d_out, (colors - suffix[:, 1:, :])
    ) * before * valid
    d_colors *= valid[..., None]
    return d_colors, d_alphas


def expected_depth(
    t: NDArray[np.float64], weights: NDArray, valid: NDArray[np.bool_]
) -> NDArray[np.float64]:
    """Contribution-weighted mean ray parameter; +inf where nothing contributes."""
    w = np.where(valid, weights, 0.0)
    wsum = w.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        depth = (w * np.where(valid, t, 0.0)).sum(axis=1) / wsum
    return np.where(wsum > 0.0, depth, np.inf)


def weighted_median_depth(
    t: NDArray[np.float64], weights: NDArray, valid: NDArray[np.bool_] | None = None
) -> float:
    """Weighted median of sample ray parameters across a whole image batch.

    Powers the periphery disparity shift. Returns +inf when total weight
    is zero (all-background image).
    """
    t = np.asarray(t, dtype=np.float64).ravel()
    w = np.asarray(weights, dtype=np.float64).ravel()
    if valid is not None:
        keep = np.asarray(valid).ravel()
        t, w = t[keep], w[keep]
    mask = w > 0
    t, w = t[mask], w[mask]
    if t.size == 0:
        return float("inf")
    order = np.argsort(t)
    t, w = t[order], w[order]
    cdf = np.cumsum(w)
    idx = int(np.searchsorted(cdf, 0.5 * cdf[-1]))
    return float(t[min(idx, t.size - 1)])


def march_samples(
    field: NeuralField,
    origins: NDArray[np.float64],
    directions: NDArray[np.float64],
    background: NDArray = BLACK,
    r_near: float | None = None,
    r_far: float | None = None,
) -> dict:
    """Shared marching core: intersect, query the field, composite.

    Returns a dict with colors/depth plus the per-sample internals the
    training path and the median-depth summary need.
    """
    points, t, valid = grid_intersections(
        field.grid, origins, directions, r_near=r_near, r_far=r_far
    )
    B, n = t.shape
    # Encode with the stored grid radius per sphere: the intersection norm
    # matches it to 1e-9 and using it keeps the domain membership exact.
    safe_points = np.where(valid[..., None], points, 1.0)
    _, theta, phi = cartesian_to_spherical_batch(safe_points.reshape(-1, 3))
    radius = np.broadcast_to(field.grid.radii_array, (B, n)).ravel()
    out = field.forward(radius, theta, phi, check_domain=False).reshape(B, n, 4)
    colors = out[..., :3]
    alphas = out[..., 3]
    final, weights = composite_over(colors, alphas, valid, background)
    return {
        "color": final,
        "depth": expected_depth(t, weights, valid),
        "t": t,
        "weights": np.where(valid, weights, 0.0),
        "valid": valid,
        "sample_colors": colors,
        "sample_alphas": alphas,
    }


def march(
    field: NeuralField,
    batch: RayBatch,
    background: NDArray = BLACK,
    r_near: float | None = None,
    r_far: float | None = None,
) -> tuple[NDArray[np.float32], NDArray[np.float64], float]:
    """Render a ray batch through the field.

    Returns (colors (B, 3) float32, depth (B,) float64, median_depth).
    Rays that intersect no bounded sphere get the background color and
    infinite depth; median_depth is the weighted median of contributing
    sample parameters across the whole batch.
    """
    res = march_samples(
        field, batch.origins, batch.directions, background, r_near, r_far
    )
    median = weighted_median_depth(res["t"], res["weights"])
    return res["color"].astype(np.float32), res["depth"], median


def render_image(
    field: NeuralField,
    camera: PinholeCamera,
    background: NDArray = BLACK,
    rays_per_chunk: int = 65536,
) -> tuple[NDArray[np.float32], NDArray[np.float64], float]:
    """March a full camera image. Returns (rgb (H, W, 3), depth (H, W), median_depth)."""
    batch = build_rays(camera)
    colors = np.empty((len(batch), 3), dtype=np.float32)
    depth = np.empty(len(batch), dtype=np.float64)
    t_parts, w_parts = [], []
    for lo in range(0, len(batch), rays_per_chunk):
        hi = min(lo + rays_per_chunk, len(batch))
        res = march_samples(
            field, batch.origins[lo:hi], batch.directions[lo:hi], background
        )
        colors[lo:hi] = res["color"].astype(np.float32)
        depth[lo:hi] = res["depth"]
        t_parts.append(res["t"])
        w_parts.append(res["weights"])
    median = weighted_median_depth(np.concatenate(t_parts), np.concatenate(w_parts))
    img = colors.reshape(camera.height, camera.width, 3)
    dep = depth.reshape(camera.height, camera.width)
    return img, dep, median
