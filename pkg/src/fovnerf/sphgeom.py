"""Geometry of the egocentric concentric-sphere representation.

All functions here are pure and operate in 64-bit floats. Scalar variants
take/return plain 3-vectors; ``*_batch`` variants are vectorized over the
leading axis and are what the rendering path uses.

Sphere indices are 0-based throughout. Radii are sorted strictly
increasing, so "smallest index" and "smallest radius" tie-breaking agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateInputError

Vec3 = NDArray[np.float64]

_EPS = 1e-12


@dataclass(frozen=True)
class ConcentricGrid:
    """Concentric spheres around the origin: count, radii and march bounds.

    ``r_near``/``r_far`` bound which spheres may contribute during ray
    marching; every radius must lie inside them.
    """

    radii: tuple[float, ...]
    r_near: float = field(default=0.0)
    r_far: float = field(default=0.0)

    def __post_init__(self) -> None:
        radii = tuple(float(r) for r in self.radii)
        object.__setattr__(self, "radii", radii)
        if len(radii) == 0:
            raise ValueError("grid needs at least one sphere")
        if any(r <= 0 for r in radii):
            raise ValueError("all radii must be positive")
        if any(b >= a for a, b in zip(radii[1:], radii[:-1])):
            raise ValueError("radii must be strictly increasing")
        r_near = float(self.r_near) if self.r_near else radii[0]
        r_far = float(self.r_far) if self.r_far else radii[-1]
        if not (0 < r_near <= radii[0] and radii[-1] <= r_far):
            raise ValueError("radii must lie within [r_near, r_far]")
        object.__setattr__(self, "r_near", r_near)
        object.__setattr__(self, "r_far", r_far)

    @property
    def n_spheres(self) -> int:
        return len(self.radii)

    @property
    def radii_array(self) -> NDArray[np.float64]:
        return np.asarray(self.radii, dtype=np.float64)

    @staticmethod
    def uniform(n_spheres: int, r_near: float, r_far: float) -> "ConcentricGrid":
        """Radii spread uniformly over [r_near, r_far], endpoints included."""
        if n_spheres < 1:
            raise ValueError("n_spheres must be positive")
        if not (0 < r_near < r_far):
            raise ValueError("need 0 < r_near < r_far")
        if n_spheres == 1:
            radii = (0.5 * (r_near + r_far),)
        else:
            radii = tuple(np.linspace(r_near, r_far, n_spheres))
        return ConcentricGrid(radii=radii, r_near=r_near, r_far=r_far)


@dataclass(frozen=True)
class Ray:
    """Origin plus unit direction."""

    origin: Vec3
    direction: Vec3

    def __post_init__(self) -> None:
        origin = np.asarray(self.origin, dtype=np.float64)
        direction = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit-length within 1e-9")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)


@dataclass(frozen=True)
class SphericalPoint:
    """Point in spherical coordinates: radius, polar theta [0, pi], azimuth phi [-pi, pi)."""

    radius: float
    theta: float
    phi: float


def nearest_sphere_index(grid: ConcentricGrid, q: Vec3) -> int:
    """Index of the sphere whose radius is closest to ||q||; ties pick the smaller radius."""
    q = np.asarray(q, dtype=np.float64)
    norm = float(np.linalg.norm(q))
    if norm < _EPS:
        raise DegenerateInputError("cannot select a sphere for the zero vector")
    return nearest_sphere_index_batch(grid, np.asarray([norm]))[0]


def nearest_sphere_index_batch(
    grid: ConcentricGrid, norms: NDArray[np.float64]
) -> NDArray[np.intp]:
    """Vectorized nearest-radius selection on an array of vector norms.

    ``np.argmin`` returns the first minimum, which with increasing radii
    implements the smaller-radius tie-break.
    """
    norms = np.asarray(norms, dtype=np.float64)
    return np.argmin(np.abs(norms[..., None] - grid.radii_array), axis=-1)


def project_to_grid(grid: ConcentricGrid, q: Vec3) -> Vec3:
    """Radially project q onto its nearest sphere: r_k * q / ||q||."""
    q = np.asarray(q, dtype=np.float64)
    norm = float(np.linalg.norm(q))
    if norm < _EPS:
        raise DegenerateInputError("cannot project the zero vector")
    k = nearest_sphere_index(grid, q)
    return grid.radii[k] / norm * q


def project_to_grid_batch(grid: ConcentricGrid, qs: NDArray[np.float64]) -> NDArray[np.float64]:
    qs = np.asarray(qs, dtype=np.float64)
    norms = np.linalg.norm(qs, axis=-1)
    if np.any(norms < _EPS):
        raise DegenerateInputError("cannot project zero vectors")
    ks = nearest_sphere_index_batch(grid, norms)
    return qs * (grid.radii_array[ks] / norms)[..., None]


def ray_sphere_intersect(radius: float, ray: Ray) -> Vec3 | None:
    """Exit intersection of a ray with the origin-centered sphere of given radius.

    The returned root is t = sqrt((x.v)^2 - ||x||^2 + r^2) - x.v, the far
    (exit) intersection when the origin is inside the sphere. Returns None
    when the discriminant is negative or the root lies behind the origin.
    """
    p, t, ok = ray_sphere_intersect_batch(
        radius, ray.origin[None, :], ray.direction[None, :]
    )
    return p[0] if ok[0] else None


def ray_sphere_intersect_batch(
    radius: float,
    origins: NDArray[np.float64],
    directions: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.bool_]]:
    """Batch exit-intersection. Returns (points, t, valid); invalid rows are NaN/-1."""
    origins = np.asarray(origins, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    b = np.einsum("...i,...i->...", origins, directions)
    c = np.einsum("...i,...i->...", origins, origins) - radius * radius
    disc = b * b - c
    valid = disc >= 0.0
    t = np.where(valid, np.sqrt(np.where(valid, disc, 0.0)) - b, -1.0)
    valid &= t >= 0.0
    points = origins + t[..., None] * directions
    points = np.where(valid[..., None], points, np.nan)
    return points, np.where(valid, t, -1.0), valid


def closest_grid_intersection(grid: ConcentricGrid, viewpoint: Vec3, q: Vec3) -> Vec3 | None:
    """Intersection, on the sphere nearest to ||q||, of the ray from viewpoint through q.

    With the viewpoint at the origin this degenerates exactly to the radial
    projection, so that case is routed through :func:`project_to_grid`.
    Returns None when the ray misses the selected sphere.
    """
    viewpoint = np.asarray(viewpoint, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if float(np.linalg.norm(q - viewpoint)) < _EPS:
        raise DegenerateInputError("q coincides with the viewpoint")
    if float(np.linalg.norm(viewpoint)) < _EPS:
        return project_to_grid(grid, q)
    k = nearest_sphere_index(grid, q)
    d = q - viewpoint
    d = d / np.linalg.norm(d)
    return ray_sphere_intersect(grid.radii[k], Ray(viewpoint, d))


def closest_grid_intersection_batch(
    grid: ConcentricGrid,
    viewpoint: Vec3,
    qs: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Batch form of :func:`closest_grid_intersection` for a shared viewpoint."""
    viewpoint = np.asarray(viewpoint, dtype=np.float64)
    qs = np.asarray(qs, dtype=np.float64)
    if float(np.linalg.norm(viewpoint)) < _EPS:
        return project_to_grid_batch(grid, qs), np.ones(qs.shape[0], dtype=bool)
    norms = np.linalg.norm(qs, axis=-1)
    if np.any(norms < _EPS):
        raise DegenerateInputError("scene points at the origin are degenerate")
    ks = nearest_sphere_index_batch(grid, norms)
    dirs = qs - viewpoint
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    points = np.full_like(qs, np.nan)
    ok = np.zeros(qs.shape[0], dtype=bool)
    for k in np.unique(ks):
        sel = ks == k
        p, _, v = ray_sphere_intersect_batch(
            grid.radii[k], np.broadcast_to(viewpoint, qs[sel].shape), dirs[sel]
        )
        points[sel] = p
        ok[sel] = v
    return points, ok


def cartesian_to_spherical(p: Vec3) -> SphericalPoint:
    """(x, y, z) -> (radius, theta, phi) with theta=0 at +z and phi=atan2(y, x)."""
    p = np.asarray(p, dtype=np.float64)
    r = float(np.linalg.norm(p))
    if r < _EPS:
        raise DegenerateInputError("zero vector has no direction")
    # arctan2 form keeps full precision near the poles, unlike arccos(z/r)
    theta = float(np.arctan2(np.hypot(p[0], p[1]), p[2]))
    phi = float(np.arctan2(p[1], p[0]))
    if phi >= np.pi:  # fold atan2's +pi endpoint onto [-pi, pi)
        phi = -np.pi
    return SphericalPoint(radius=r, theta=theta, phi=phi)


def spherical_to_cartesian(sp: SphericalPoint) -> Vec3:
    st = np.sin(sp.theta)
    return np.asarray(
        [
            sp.radius * st * np.cos(sp.phi),
            sp.radius * st * np.sin(sp.phi),
            sp.radius * np.cos(sp.theta),
        ],
        dtype=np.float64,
    )


def cartesian_to_spherical_batch(
    points: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Batched (radius, theta, phi) decomposition; see :func:`cartesian_to_spherical`."""
    points = np.asarray(points, dtype=np.float64)
    r = np.linalg.norm(points, axis=-1)
    if np.any(r < _EPS):
        raise DegenerateInputError("zero vectors have no direction")
    theta = np.arctan2(np.hypot(points[..., 0], points[..., 1]), points[..., 2])
    phi = np.arctan2(points[..., 1], points[..., 0])
    phi = np.where(phi >= np.pi, -np.pi, phi)
    return r, theta, phi
