"""View sampling, dataset rendering and manifest persistence.

A dataset directory holds ``manifest.json`` plus ``images/`` (8-bit sRGB
PNG) and ``depth/`` (raw little-endian f32 with a dimensions header).
Training converts sRGB back to linear before the loss.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from PIL import Image

from .errors import ChecksumError, ConfigError, MissingFileError, SchemaVersionError
from .foveation import LayerSpec
from .raymarch import PinholeCamera, build_rays
from .scenes import ProceduralScene, render_reference
from .training import RayPool

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEPTH_MAGIC = b"FDEP"


# ---------------------------------------------------------------- image io

def linear_to_srgb(x: NDArray) -> NDArray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1 / 2.4) - 0.055)


def srgb_to_linear(x: NDArray) -> NDArray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.04045, x / 12.92, np.power((x + 0.055) / 1.055, 2.4))


def save_png(path: Path, rgb_linear: NDArray) -> None:
    srgb = np.round(linear_to_srgb(rgb_linear) * 255.0).astype(np.uint8)
    Image.fromarray(srgb, mode="RGB").save(path, format="PNG")


def load_png_linear(path: Path) -> NDArray[np.float32]:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    return srgb_to_linear(arr).astype(np.float32)


def save_depth(path: Path, depth: NDArray) -> None:
    h, w = depth.shape
    finite = np.where(np.isfinite(depth), depth, np.float32(np.finfo(np.float32).max))
    with open(path, "wb") as fh:
        fh.write(DEPTH_MAGIC)
        fh.write(struct.pack("<II", w, h))
        fh.write(finite.astype("<f4").tobytes())


def load_depth(path: Path) -> NDArray[np.float32]:
    data = Path(path).read_bytes()
    if data[:4] != DEPTH_MAGIC:
        raise ConfigError(f"{path} is not a depth file")
    w, h = struct.unpack("<II", data[4:12])
    return np.frombuffer(data[12:], dtype="<f4").reshape(h, w).copy()


# ------------------------------------------------------------ view sampling

def translation_lattice(
    box: tuple[tuple[float, float, float], tuple[float, float, float]],
    step: float = 0.05,
) -> NDArray:
    """Grid positions every ``step`` meters along each axis, box corners included."""
    lo = np.asarray(box[0], dtype=np.float64)
    hi = np.asarray(box[1], dtype=np.float64)
    axes = []
    for a in range(3):
        span = hi[a] - lo[a]
        if span < step / 2:
            axes.append(np.asarray([0.5 * (lo[a] + hi[a])]))
        else:
            count = int(round(span / step)) + 1
            axes.append(lo[a] + np.arange(count) * step)
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)


def look_rotation(forward: NDArray, up_hint: NDArray | None = None) -> NDArray:
    """Camera-to-world rotation whose +z is ``forward``; camera +y leans to the hint."""
    f = np.asarray(forward, dtype=np.float64)
    f = f / np.linalg.norm(f)
    up = np.asarray([0.0, 1.0, 0.0]) if up_hint is None else np.asarray(up_hint, float)
    if abs(np.dot(f, up)) > 0.999:
        up = np.asarray([0.0, 0.0, 1.0]) if abs(f[2]) < 0.9 else np.asarray([1.0, 0.0, 0.0])
    right = np.cross(up, f)
    right /= np.linalg.norm(right)
    cam_up = np.cross(f, right)
    return np.stack([right, cam_up, f], axis=1)


def _sph_dir(theta, phi) -> NDArray:
    """Direction with polar angle from the world +y axis (the tiling pole)."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    return np.stack(
        np.broadcast_arrays(
            np.sin(theta) * np.cos(phi), np.cos(theta), np.sin(theta) * np.sin(phi)
        ),
        axis=-1,
    )


def _ring_camera(theta: float, phi: float) -> NDArray:
    """Camera aimed at (theta, phi) with roll fixed in the spherical frame.

    The basis depends on phi only through a rotation about the pole axis,
    so every sector camera in a ring sees a congruent cell.
    """
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    fwd = np.asarray([st * cp, ct, st * sp])
    right = np.asarray([sp, 0.0, -cp])
    up = np.asarray([-ct * cp, st, -ct * sp])
    return np.stack([right, up, fwd], axis=1)


def rotation_tiling(fov_deg: float) -> list[NDArray]:
    """Rotations whose square frusta tile the full direction sphere.

    Rings partition the polar angle into bands no taller than the FoV; each
    ring is split into equal azimuth sectors, so cells are disjoint. The
    sector count per ring is the smallest for which the ring camera's
    frustum covers its whole cell (probed on a boundary grid with margin),
    which guarantees the frusta union covers the sphere.
    """
    if not (0 < fov_deg <= 180):
        raise ConfigError("layer FoV must be in (0, 180] degrees for tiling")
    n_rings = int(np.ceil(180.0 / fov_deg))
    band = np.pi / n_rings
    rotations = []
    for ring in range(n_rings):
        theta_lo = ring * band
        theta_hi = theta_lo + band
        theta_c = 0.5 * (theta_lo + theta_hi)
        widest = max(np.sin(theta_lo), np.sin(theta_hi))
        if theta_lo < np.pi / 2 < theta_hi:
            widest = 1.0
        n_az = max(1, int(np.ceil(360.0 * widest / fov_deg)))
        cam = _ring_camera(theta_c, 0.0)
        while n_az < 720:
            half_sector = np.pi / n_az
            tt, pp = np.meshgrid(
                np.linspace(theta_lo, theta_hi, 9),
                np.linspace(-half_sector, half_sector, 9),
            )
            pts = _sph_dir(tt.ravel(), pp.ravel())
            # tiny positive slack: polar band edges sit exactly on the
            # frustum boundary when the band equals the FoV, and 0.02 deg
            # is far inside the 1 degree seam tolerance
            if direction_in_frustum(cam, fov_deg, pts, slack_deg=0.02).all():
                break
            n_az += 1
        for i in range(n_az):
            phi = (i + 0.5) * 2 * np.pi / n_az - np.pi
            rotations.append(_ring_camera(theta_c, phi))
    return rotations


def direction_in_frustum(camera_rotation: NDArray, fov_deg: float,
                         dirs: NDArray, slack_deg: float = 0.0) -> NDArray:
    """Mask of world directions inside a square frustum of the given FoV."""
    local = np.asarray(dirs) @ camera_rotation
    z = local[..., 2]
    tan_half = np.tan(np.radians(fov_deg + 2 * slack_deg) / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        inside = (z > 0) & (np.abs(local[..., 0] / z) <= tan_half) & (
            np.abs(local[..., 1] / z) <= tan_half
        )
    return inside


# ----------------------------------------------------------------- manifest

@dataclass
class ViewRecord:
    position: list[float]
    rotation: list[float]  # row-major 3x3
    fov_deg: float
    width: int
    height: int
    image: str
    depth: str
    image_sha256: str = ""
    depth_sha256: str = ""

    def camera(self) -> PinholeCamera:
        return PinholeCamera(
            position=np.asarray(self.position),
            rotation=np.asarray(self.rotation).reshape(3, 3),
            fov_deg=self.fov_deg,
            width=self.width,
            height=self.height,
        )


@dataclass
class ViewDataset:
    layer_tag: str
    fov_deg: float
    width: int
    height: int
    views: list[ViewRecord]
    scene_name: str = ""
    root: Path | None = None

    def __len__(self) -> int:
        return len(self.views)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(dataset: ViewDataset, root: Path) -> Path:
    if not dataset.views:
        log.warning("writing a manifest with an empty view list")
    payload = {
        "schema_version": SCHEMA_VERSION,
        "layer_tag": dataset.layer_tag,
        "fov_deg": dataset.fov_deg,
        "width": dataset.width,
        "height": dataset.height,
        "scene_name": dataset.scene_name,
        "views": [asdict(v) for v in dataset.views],
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(payload, indent=1))
    return path


def read_manifest(root: Path, verify_checksums: bool = True) -> ViewDataset:
    root = Path(root)
    path = root / "manifest.json"
    if not path.exists():
        raise MissingFileError(f"no manifest at {path}")
    payload = json.loads(path.read_text())
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"manifest schema {payload.get('schema_version')} != {SCHEMA_VERSION}"
        )
    views = [ViewRecord(**v) for v in payload["views"]]
    dataset = ViewDataset(
        layer_tag=payload["layer_tag"],
        fov_deg=payload["fov_deg"],
        width=payload["width"],
        height=payload["height"],
        views=views,
        scene_name=payload.get("scene_name", ""),
        root=root,
    )
    for v in views:
        for rel, want in ((v.image, v.image_sha256), (v.depth, v.depth_sha256)):
            fp = root / rel
            if not fp.exists():
                raise MissingFileError(f"{fp} referenced by manifest is missing")
            if verify_checksums and want and _sha256(fp) != want:
                raise ChecksumError(f"{fp} does not match its recorded checksum")
    return dataset


# ------------------------------------------------------------- generation

def sample_views(
    scene: ProceduralScene,
    layer: LayerSpec,
    step: float = 0.05,
    max_positions: int | None = None,
    max_rotations: int | None = None,
) -> list[tuple[NDArray, NDArray]]:
    """(position, rotation) pairs: 5 cm lattice x rotation tiling of the sphere."""
    if layer.fov_deg > 180:
        raise ConfigError("cannot tile rotations for FoV > 180 degrees")
    positions = translation_lattice(scene.translation_box, step)
    rotations = rotation_tiling(layer.fov_deg)
    if max_positions is not None:
        positions = positions[:: max(1, len(positions) // max_positions)][:max_positions]
    if max_rotations is not None:
        rotations = rotations[:: max(1, len(rotations) // max_rotations)][:max_rotations]
    return [(p, R) for p in positions for R in rotations]


def generate_dataset(
    scene: ProceduralScene,
    layer: LayerSpec,
    out_dir: Path,
    step: float = 0.05,
    width: int | None = None,
    height: int | None = None,
    max_positions: int | None = None,
    max_rotations: int | None = None,
    views: list[tuple[NDArray, NDArray]] | None = None,
) -> ViewDataset:
    """Render reference views for a layer and persist them with a manifest."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "depth").mkdir(parents=True, exist_ok=True)
    width = width or layer.width
    height = height or layer.height
    if views is None:
        views = sample_views(scene, layer, step, max_positions, max_rotations)
    records = []
    for i, (pos, rot) in enumerate(views):
        cam = PinholeCamera(position=pos, rotation=rot, fov_deg=layer.fov_deg,
                            width=width, height=height)
        res = render_reference(scene, cam)
        img_rel = f"images/view_{i:05d}.png"
        dep_rel = f"depth/view_{i:05d}.f32"
        save_png(out_dir / img_rel, res.rgb)
        save_depth(out_dir / dep_rel, res.depth)
        records.append(
            ViewRecord(
                position=[float(x) for x in pos],
                rotation=[float(x) for x in np.asarray(rot).ravel()],
                fov_deg=layer.fov_deg,
                width=width,
                height=height,
                image=img_rel,
                depth=dep_rel,
                image_sha256=_sha256(out_dir / img_rel),
                depth_sha256=_sha256(out_dir / dep_rel),
            )
        )
    dataset = ViewDataset(
        layer_tag=layer.tag, fov_deg=layer.fov_deg, width=width, height=height,
        views=records, scene_name=scene.name, root=out_dir,
    )
    write_manifest(dataset, out_dir)
    return dataset


def build_ray_pool(dataset: ViewDataset, limit_views: int | None = None) -> RayPool:
    """Flatten dataset views into training rays with linear-RGB targets."""
    if dataset.root is None:
        raise ConfigError("dataset has no root directory; read it from disk first")
    origins, dirs, targets = [], [], []
    for v in dataset.views[:limit_views]:
        batch = build_rays(v.camera())
        img = load_png_linear(dataset.root / v.image)
        origins.append(batch.origins)
        dirs.append(batch.directions)
        targets.append(img.reshape(-1, 3))
    return RayPool(
        origins=np.concatenate(origins),
        directions=np.concatenate(dirs),
        targets=np.concatenate(targets).astype(np.float32),
        fov_deg=dataset.fov_deg,
        layer_tag=dataset.layer_tag,
    )
