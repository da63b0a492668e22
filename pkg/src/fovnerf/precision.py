"""Monte-Carlo estimators of the grid's geometric precision loss.

A scene point q has two sphere images: the view-independent radial
projection q' (where content is stored) and the per-view ray intersection
q-hat (where a camera samples). Their 3D offset is the representation
error at q; projecting both into a camera measures it in pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateInputError
from .raymarch import PinholeCamera
from .scenes import ProceduralScene, sample_surface_points, unoccluded
from .sphgeom import (
    ConcentricGrid,
    closest_grid_intersection_batch,
    project_to_grid_batch,
)


@dataclass
class PrecisionEstimate:
    mean: float
    stderr: float
    n_used: int
    n_skipped: int

    def __repr__(self) -> str:
        return f"{self.mean:.6g} +- {self.stderr:.2g} (n={self.n_used})"


def _summarize(values: np.ndarray, skipped: int) -> PrecisionEstimate:
    if values.size == 0:
        raise DegenerateInputError("no usable (view, point) pairs")
    stderr = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
    return PrecisionEstimate(
        mean=float(values.mean()), stderr=stderr,
        n_used=int(values.size), n_skipped=int(skipped),
    )


def sample_view_positions(
    scene: ProceduralScene, n: int, rng: np.random.Generator
) -> NDArray:
    lo = np.asarray(scene.translation_box[0])
    hi = np.asarray(scene.translation_box[1])
    return lo + rng.uniform(size=(n, 3)) * (hi - lo)


def pair_offsets(
    grid: ConcentricGrid, x: NDArray, qs: NDArray
) -> tuple[NDArray, NDArray]:
    """||q' - q_hat|| for each scene point seen from viewpoint x.

    Returns (distances, valid); a pair is invalid when the ray from x
    misses the sphere selected for q.
    """
    qs = np.asarray(qs, dtype=np.float64)
    q_prime = project_to_grid_batch(grid, qs)
    q_hat, ok = closest_grid_intersection_batch(grid, np.asarray(x, float), qs)
    d = np.zeros(qs.shape[0])
    d[ok] = np.linalg.norm(q_prime[ok] - q_hat[ok], axis=1)
    return d, ok


def e_scene(
    grid: ConcentricGrid,
    scene: ProceduralScene,
    n_views: int = 16,
    n_points_per_view: int = 512,
    seed: int = 0,
) -> PrecisionEstimate:
    """Mean ||q' - q_hat|| over unoccluded (view, scene point) pairs."""
    rng = np.random.default_rng(seed)
    views = sample_view_positions(scene, n_views, rng)
    vals = []
    skipped = 0
    for x in views:
        q = sample_surface_points(scene, n_points_per_view, rng)
        clear = unoccluded(scene, x, q)
        q = q[clear]
        skipped += int((~clear).sum())
        if q.shape[0] == 0:
            continue
        d, ok = pair_offsets(grid, x, q)
        skipped += int((~ok).sum())
        vals.append(d[ok])
    return _summarize(np.concatenate(vals) if vals else np.empty(0), skipped)


def visible_points(
    scene: ProceduralScene,
    camera: PinholeCamera,
    n: int,
    rng: np.random.Generator,
) -> NDArray:
    """First-hit scene points through uniformly random image positions."""
    from .scenes import trace

    u = rng.uniform(-1.0, 1.0, size=n) * camera.tan_half_x
    v = rng.uniform(-1.0, 1.0, size=n) * camera.tan_half_y
    d_cam = np.stack([u, v, np.ones_like(u)], axis=-1)
    d_cam /= np.linalg.norm(d_cam, axis=-1, keepdims=True)
    dirs = d_cam @ camera.rotation.T
    t, pid, _, _ = trace(scene, np.broadcast_to(camera.position, dirs.shape), dirs)
    hit = pid >= 0
    return camera.position + t[hit, None] * dirs[hit]


def e_image(
    grid: ConcentricGrid,
    scene: ProceduralScene,
    cameras: list[PinholeCamera],
    n_points_per_camera: int = 512,
    seed: int = 0,
) -> tuple[PrecisionEstimate, list[PrecisionEstimate]]:
    """Pixel-space offset between the projections of q and q' per camera.

    q projects to the same pixel as its on-ray sphere image q-hat, so this
    is the projected form of the e_scene offset, integrated over the image
    (points are first hits through random image positions). Points whose
    radial projection lands behind the camera, or whose selected sphere
    the view ray misses, are skipped and counted.
    """
    rng = np.random.default_rng(seed)
    per_camera = []
    pooled = []
    pooled_skips = 0
    for cam in cameras:
        q = visible_points(scene, cam, n_points_per_camera, rng)
        skipped = n_points_per_camera - q.shape[0]
        if q.shape[0] == 0:
            per_camera.append(PrecisionEstimate(np.nan, np.nan, 0, skipped))
            continue
        q_prime = project_to_grid_batch(grid, q)
        q_hat, ok = closest_grid_intersection_batch(grid, cam.position, q)
        skipped += int((~ok).sum())
        pix_q, front_q = cam.project(q[ok])
        pix_p, front_p = cam.project(q_prime[ok])
        use = front_q & front_p
        skipped += int((~use).sum())
        d = np.linalg.norm(pix_q[use] - pix_p[use], axis=1)
        per_camera.append(_summarize(d, skipped))
        pooled.append(d)
        pooled_skips += skipped
    overall = _summarize(
        np.concatenate(pooled) if pooled else np.empty(0), pooled_skips
    )
    return overall, per_camera
