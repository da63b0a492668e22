"""Analytic procedural scenes and the reference ray tracer.

Scenes are unions of spheres, axis-aligned boxes and axis-aligned
rectangles (optionally checker-textured), shaded with a fixed directional
light plus ambient. Rendering is exact per-pixel primitive intersection,
bit-for-bit deterministic, and returns true depth, which makes these
scenes usable as oracles for the neural pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from numpy.typing import NDArray

_BIG = 1e30


@dataclass(frozen=True)
class SpherePrim:
    center: tuple[float, float, float]
    radius: float
    albedo: tuple[float, float, float]


@dataclass(frozen=True)
class BoxPrim:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    albedo: tuple[float, float, float]


@dataclass(frozen=True)
class RectPrim:
    """Axis-aligned rectangle: plane {axis == coord} bounded on the other two axes.

    With cell > 0 the surface is a checkerboard of color_a/color_b squares
    of side ``cell`` in the rectangle's own (u, v) coordinates.
    """

    axis: int
    coord: float
    u_range: tuple[float, float]
    v_range: tuple[float, float]
    color_a: tuple[float, float, float]
    color_b: tuple[float, float, float] | None = None
    cell: float = 0.0

    @property
    def uv_axes(self) -> tuple[int, int]:
        return {0: (1, 2), 1: (0, 2), 2: (0, 1)}[self.axis]


Primitive = SpherePrim | BoxPrim | RectPrim


@dataclass
class ProceduralScene:
    primitives: list[Primitive]
    background: tuple[float, float, float] = (0.02, 0.02, 0.03)
    light_dir: tuple[float, float, float] = (0.35, 0.85, -0.40)  # toward the light
    ambient: float = 0.35
    translation_box: tuple[tuple[float, float, float], tuple[float, float, float]] = (
        (-0.15, -0.15, -0.15),
        (0.15, 0.15, 0.15),
    )
    name: str = "scene"

    def __post_init__(self) -> None:
        d = np.asarray(self.light_dir, dtype=np.float64)
        object.__setattr__(self, "light_dir", tuple(d / np.linalg.norm(d)))

    def bounding_box(self) -> tuple[NDArray, NDArray]:
        los, his = [], []
        for p in self.primitives:
            if isinstance(p, SpherePrim):
                c = np.asarray(p.center)
                los.append(c - p.radius)
                his.append(c + p.radius)
            elif isinstance(p, BoxPrim):
                los.append(np.asarray(p.lo))
                his.append(np.asarray(p.hi))
            else:
                ua, va = p.uv_axes
                lo = np.empty(3)
                hi = np.empty(3)
                lo[p.axis] = hi[p.axis] = p.coord
                lo[ua], hi[ua] = p.u_range
                lo[va], hi[va] = p.v_range
                los.append(lo)
                his.append(hi)
        return np.min(los, axis=0), np.max(his, axis=0)

    def radial_bounds(self, margin: float = 0.05) -> tuple[float, float]:
        """[r_near, r_far] for a grid enclosing the visible scene from the origin.

        Nearest surface distance from any viewpoint in the translation box,
        shrunk by ``margin``; bounding-sphere radius grown by ``margin``.
        """
        lo, hi = self.bounding_box()
        r_far = float(np.max(np.linalg.norm(np.stack([lo, hi]), axis=1))) * (1 + margin)
        box_lo, box_hi = np.asarray(self.translation_box[0]), np.asarray(self.translation_box[1])
        corners = np.stack(np.meshgrid(*zip(box_lo, box_hi), indexing="ij"), axis=-1).reshape(-1, 3)
        rng = np.random.default_rng(0)
        dirs = rng.normal(size=(512, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        nearest = _BIG
        for c in corners:
            origins = np.broadcast_to(c, dirs.shape)
            t, _, _, _ = trace(self, origins, dirs)
            hit = t[t < _BIG]
            if hit.size:
                nearest = min(nearest, float(hit.min()))
        r_near = max(1e-2, nearest * (1 - margin))
        return r_near, r_far


def _intersect_sphere(p: SpherePrim, o: NDArray, d: NDArray) -> NDArray:
    m = o - np.asarray(p.center)
    b = np.einsum("ij,ij->i", m, d)
    c = np.einsum("ij,ij->i", m, m) - p.radius**2
    disc = b * b - c
    t = np.full(o.shape[0], _BIG)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t0 = -b - sq
    t1 = -b + sq
    tt = np.where(t0 > 1e-9, t0, np.where(t1 > 1e-9, t1, _BIG))
    t[ok] = tt[ok]
    return t


def _intersect_box(p: BoxPrim, o: NDArray, d: NDArray) -> NDArray:
    lo = np.asarray(p.lo)
    hi = np.asarray(p.hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t_lo = (lo - o) * inv
        t_hi = (hi - o) * inv
    t_min = np.minimum(t_lo, t_hi)
    t_max = np.maximum(t_lo, t_hi)
    t_enter = np.nanmax(t_min, axis=1)
    t_exit = np.nanmin(t_max, axis=1)
    hit = (t_enter <= t_exit) & (t_exit > 1e-9)
    t = np.where(t_enter > 1e-9, t_enter, t_exit)
    return np.where(hit, t, _BIG)


def _intersect_rect(p: RectPrim, o: NDArray, d: NDArray) -> NDArray:
    da = d[:, p.axis]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (p.coord - o[:, p.axis]) / da
    ua, va = p.uv_axes
    u = o[:, ua] + t * d[:, ua]
    v = o[:, va] + t * d[:, va]
    ok = (
        (np.abs(da) > 1e-12)
        & (t > 1e-9)
        & (u >= p.u_range[0]) & (u <= p.u_range[1])
        & (v >= p.v_range[0]) & (v <= p.v_range[1])
    )
    return np.where(ok, t, _BIG)


def _normal_and_albedo(prim: Primitive, pts: NDArray, dirs: NDArray) -> tuple[NDArray, NDArray]:
    n_pts = pts.shape[0]
    if isinstance(prim, SpherePrim):
        n = pts - np.asarray(prim.center)
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        alb = np.broadcast_to(np.asarray(prim.albedo), (n_pts, 3)).copy()
    elif isinstance(prim, BoxPrim):
        lo = np.asarray(prim.lo)
        hi = np.asarray(prim.hi)
        center = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        rel = (pts - center) / half
        n = np.zeros_like(pts)
        face = np.argmax(np.abs(rel), axis=1)
        n[np.arange(n_pts), face] = np.sign(rel[np.arange(n_pts), face])
        alb = np.broadcast_to(np.asarray(prim.albedo), (n_pts, 3)).copy()
    else:
        n = np.zeros_like(pts)
        n[:, prim.axis] = 1.0
        if prim.cell > 0 and prim.color_b is not None:
            ua, va = prim.uv_axes
            iu = np.floor(pts[:, ua] / prim.cell).astype(np.int64)
            iv = np.floor(pts[:, va] / prim.cell).astype(np.int64)
            pick_a = (iu + iv) % 2 == 0
            alb = np.where(
                pick_a[:, None], np.asarray(prim.color_a), np.asarray(prim.color_b)
            )
        else:
            alb = np.broadcast_to(np.asarray(prim.color_a), (n_pts, 3)).copy()
    # two-sided shading: face the incoming ray
    flip = np.einsum("ij,ij->i", n, dirs) > 0
    n = np.where(flip[:, None], -n, n)
    return n, alb


def trace(
    scene: ProceduralScene, origins: NDArray, directions: NDArray
) -> tuple[NDArray, NDArray, NDArray, NDArray]:
    """Closest-hit trace. Returns (t, prim_id, normal, albedo); misses have t=1e30, id=-1."""
    origins = np.asarray(origins, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    B = origins.shape[0]
    best_t = np.full(B, _BIG)
    best_id = np.full(B, -1, dtype=np.int64)
    for i, prim in enumerate(scene.primitives):
        if isinstance(prim, SpherePrim):
            t = _intersect_sphere(prim, origins, directions)
        elif isinstance(prim, BoxPrim):
            t = _intersect_box(prim, origins, directions)
        else:
            t = _intersect_rect(prim, origins, directions)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_id = np.where(closer, i, best_id)
    normal = np.zeros((B, 3))
    albedo = np.zeros((B, 3))
    for i, prim in enumerate(scene.primitives):
        sel = best_id == i
        if not np.any(sel):
            continue
        pts = origins[sel] + best_t[sel, None] * directions[sel]
        n, alb = _normal_and_albedo(prim, pts, directions[sel])
        normal[sel] = n
        albedo[sel] = alb
    return best_t, best_id, normal, albedo


def shade(scene: ProceduralScene, normal: NDArray, albedo: NDArray, hit: NDArray) -> NDArray:
    light = np.asarray(scene.light_dir)
    diffuse = np.maximum(0.0, normal @ light)
    rgb = albedo * (scene.ambient + (1.0 - scene.ambient) * diffuse)[:, None]
    bg = np.asarray(scene.background)
    return np.where(hit[:, None], rgb, bg)


@dataclass
class RenderResult:
    rgb: NDArray[np.float32]  # (H, W, 3) linear in [0, 1]
    depth: NDArray[np.float64]  # (H, W), inf on miss
    prim_id: NDArray[np.int64]  # (H, W), -1 on miss


def render_reference(scene: ProceduralScene, camera) -> RenderResult:
    """Exact reference render with depth; deterministic bit-for-bit."""
    from .raymarch import build_rays

    batch = build_rays(camera)
    t, pid, normal, albedo = trace(scene, batch.origins, batch.directions)
    hit = pid >= 0
    rgb = shade(scene, normal, albedo, hit)
    H, W = camera.height, camera.width
    depth = np.where(hit, t, np.inf)
    return RenderResult(
        rgb=rgb.reshape(H, W, 3).astype(np.float32),
        depth=depth.reshape(H, W),
        prim_id=pid.reshape(H, W),
    )


def sample_surface_points(
    scene: ProceduralScene, n: int, rng: np.random.Generator
) -> NDArray:
    """Area-weighted random points on scene surfaces."""
    if not scene.primitives:
        from .errors import DegenerateInputError

        raise DegenerateInputError("scene has no surfaces to sample")
    areas = []
    for p in scene.primitives:
        if isinstance(p, SpherePrim):
            areas.append(4 * np.pi * p.radius**2)
        elif isinstance(p, BoxPrim):
            e = np.asarray(p.hi) - np.asarray(p.lo)
            areas.append(2 * (e[0] * e[1] + e[1] * e[2] + e[0] * e[2]))
        else:
            u = p.u_range[1] - p.u_range[0]
            v = p.v_range[1] - p.v_range[0]
            areas.append(u * v)
    areas = np.asarray(areas)
    choice = rng.choice(len(scene.primitives), size=n, p=areas / areas.sum())
    pts = np.empty((n, 3))
    for i, prim in enumerate(scene.primitives):
        sel = np.where(choice == i)[0]
        if sel.size == 0:
            continue
        m = sel.size
        if isinstance(prim, SpherePrim):
            d = rng.normal(size=(m, 3))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            pts[sel] = np.asarray(prim.center) + prim.radius * d
        elif isinstance(prim, BoxPrim):
            lo = np.asarray(prim.lo)
            hi = np.asarray(prim.hi)
            e = hi - lo
            face_areas = np.asarray([e[1] * e[2], e[1] * e[2], e[0] * e[2],
                                     e[0] * e[2], e[0] * e[1], e[0] * e[1]])
            faces = rng.choice(6, size=m, p=face_areas / face_areas.sum())
            r = lo + rng.uniform(size=(m, 3)) * e
            axis = faces // 2
            r[np.arange(m), axis] = np.where(faces % 2 == 0, lo[axis], hi[axis])
            pts[sel] = r
        else:
            ua, va = prim.uv_axes
            r = np.empty((m, 3))
            r[:, prim.axis] = prim.coord
            r[:, ua] = rng.uniform(prim.u_range[0], prim.u_range[1], size=m)
            r[:, va] = rng.uniform(prim.v_range[0], prim.v_range[1], size=m)
            pts[sel] = r
    return pts


def unoccluded(scene: ProceduralScene, x: NDArray, qs: NDArray, tol: float = 1e-6) -> NDArray:
    """True where the segment from viewpoint x to each surface point q is clear."""
    x = np.asarray(x, dtype=np.float64)
    qs = np.asarray(qs, dtype=np.float64)
    seg = qs - x
    dist = np.linalg.norm(seg, axis=1)
    dirs = seg / dist[:, None]
    t, _, _, _ = trace(scene, np.broadcast_to(x, qs.shape), dirs)
    return t >= dist * (1 - tol) - 1e-9


def default_scene() -> ProceduralScene:
    """Enclosed studio room with a few matte objects; distances roughly 1 to 7 m."""
    prims: list[Primitive] = [
        RectPrim(axis=1, coord=-1.2, u_range=(-3.5, 3.5), v_range=(-3.5, 3.5),
                 color_a=(0.75, 0.72, 0.68), color_b=(0.35, 0.33, 0.31), cell=0.7),
        RectPrim(axis=1, coord=2.2, u_range=(-3.5, 3.5), v_range=(-3.5, 3.5),
                 color_a=(0.85, 0.85, 0.88)),
        RectPrim(axis=0, coord=-3.5, u_range=(-1.2, 2.2), v_range=(-3.5, 3.5),
                 color_a=(0.55, 0.68, 0.80)),
        RectPrim(axis=0, coord=3.5, u_range=(-1.2, 2.2), v_range=(-3.5, 3.5),
                 color_a=(0.80, 0.62, 0.45)),
        RectPrim(axis=2, coord=-3.5, u_range=(-3.5, 3.5), v_range=(-1.2, 2.2),
                 color_a=(0.62, 0.78, 0.58)),
        RectPrim(axis=2, coord=3.5, u_range=(-3.5, 3.5), v_range=(-1.2, 2.2),
                 color_a=(0.78, 0.76, 0.52)),
        SpherePrim(center=(1.2, -0.4, 2.0), radius=0.8, albedo=(0.82, 0.18, 0.14)),
        SpherePrim(center=(-0.9, -0.3, -1.7), radius=0.5, albedo=(0.16, 0.62, 0.25)),
        SpherePrim(center=(0.5, 0.45, -1.3), radius=0.35, albedo=(0.92, 0.78, 0.18)),
        BoxPrim(lo=(-1.7, -1.2, 1.4), hi=(-0.9, -0.35, 2.2), albedo=(0.22, 0.33, 0.78)),
    ]
    return ProceduralScene(primitives=prims, name="studio")


def empty_scene() -> ProceduralScene:
    return ProceduralScene(primitives=[], name="empty")
