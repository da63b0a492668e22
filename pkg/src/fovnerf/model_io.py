"""Binary model serialization.

Layout (all integers and floats little-endian):

  magic "FNRF" (4 bytes)
  u32 version (currently 1)
  u8 layer_tag (0=fovea, 1=mid, 2=far)
  u32 N, then N x f64 radii, f64 r_near, f64 r_far
  u32 bands_per_coord, u8 include_raw
  u32 n_layers, u32 n_channels, u32 output_dim
  weight matrices row-major f32, each followed by its bias vector

Round-trips are bit-exact: weights are stored and restored as raw f32.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .encoding import EncodingConfig
from .errors import MagicMismatchError, ShapeMismatchError, TruncatedStreamError
from .field import LAYER_TAGS, NeuralField
from .mlp import MlpConfig
from .sphgeom import ConcentricGrid

MAGIC = b"FNRF"
VERSION = 1


def save_field(field: NeuralField) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(struct.pack("<B", LAYER_TAGS.index(field.layer_tag)))
    grid = field.grid
    buf.write(struct.pack("<I", grid.n_spheres))
    buf.write(grid.radii_array.astype("<f8").tobytes())
    buf.write(struct.pack("<dd", grid.r_near, grid.r_far))
    buf.write(struct.pack("<IB", field.encoding.bands_per_coord,
                          1 if field.encoding.include_raw else 0))
    buf.write(struct.pack("<III", field.mlp.n_layers, field.mlp.n_channels,
                          field.mlp.output_dim))
    for p in field.params:
        buf.write(np.ascontiguousarray(p, dtype="<f4").tobytes())
    return buf.getvalue()


def _read(buf: io.BytesIO, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise TruncatedStreamError(f"expected {n} more bytes, got {len(data)}")
    return data


def load_field(data: bytes) -> NeuralField:
    buf = io.BytesIO(data)
    if _read(buf, 4) != MAGIC:
        raise MagicMismatchError("not a model stream (bad magic)")
    (version,) = struct.unpack("<I", _read(buf, 4))
    if version != VERSION:
        raise MagicMismatchError(f"unsupported model version {version}")
    (tag_idx,) = struct.unpack("<B", _read(buf, 1))
    if tag_idx >= len(LAYER_TAGS):
        raise ShapeMismatchError(f"unknown layer tag byte {tag_idx}")
    (n_spheres,) = struct.unpack("<I", _read(buf, 4))
    radii = np.frombuffer(_read(buf, 8 * n_spheres), dtype="<f8")
    r_near, r_far = struct.unpack("<dd", _read(buf, 16))
    grid = ConcentricGrid(radii=tuple(radii), r_near=r_near, r_far=r_far)
    bands, raw_flag = struct.unpack("<IB", _read(buf, 5))
    encoding = EncodingConfig(bands_per_coord=bands, include_raw=bool(raw_flag))
    n_layers, n_channels, output_dim = struct.unpack("<III", _read(buf, 12))
    cfg = MlpConfig(n_layers=n_layers, n_channels=n_channels, output_dim=output_dim)
    params = []
    for n_in, n_out in cfg.weight_shapes(encoding.width):
        w = np.frombuffer(_read(buf, 4 * n_in * n_out), dtype="<f4").reshape(n_in, n_out)
        b = np.frombuffer(_read(buf, 4 * n_out), dtype="<f4")
        params.extend([w.copy(), b.copy()])
    trailing = buf.read(1)
    if trailing:
        raise ShapeMismatchError("stream longer than the declared weight payload")
    return NeuralField(encoding=encoding, mlp=cfg, params=params, grid=grid,
                       layer_tag=LAYER_TAGS[tag_idx])


def save_field_file(field: NeuralField, path: str | Path) -> int:
    data = save_field(field)
    Path(path).write_bytes(data)
    return len(data)


def load_field_file(path: str | Path) -> NeuralField:
    return load_field(Path(path).read_bytes())
