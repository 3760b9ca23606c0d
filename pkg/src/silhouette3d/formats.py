"""File formats: .vox32 grids, binary PGM silhouettes, OBJ meshes, XYZ clouds, JSON records.

.vox32 layout (all little-endian)::

    8 bytes   magic b"SILHVOX1"
    3 x u32   H, W, D
    H*W*D x f32 occupancies, n-major then m then l
"""

from __future__ import annotations

import json
import re
import struct
from pathlib import Path
from typing import List, Union

import numpy as np

from .camera import CameraModel, Viewpoint
from .voxel import VoxelGrid

PathLike = Union[str, Path]

VOX_MAGIC = b"SILHVOX1"
_VOX_HEADER = struct.Struct("<8s3I")


class FormatError(ValueError):
    pass


def write_voxels(grid, path: PathLike) -> None:
    values = np.asarray(grid, dtype=np.float64)
    if values.ndim != 3:
        raise FormatError(f"expected a 3D grid, got shape {values.shape}")
    with open(path, "wb") as fh:
        fh.write(_VOX_HEADER.pack(VOX_MAGIC, *values.shape))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_voxel_array(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _VOX_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, h, w, d = _VOX_HEADER.unpack_from(data)
    if magic != VOX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if min(h, w, d) < 1:
        raise FormatError(f"{path}: zero-sized dims {(h, w, d)}")
    expected = _VOX_HEADER.size + 4 * h * w * d
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=_VOX_HEADER.size).reshape(h, w, d).astype(np.float64)


def read_voxels(path: PathLike) -> VoxelGrid:
    values = read_voxel_array(path)
    try:
        return VoxelGrid(values)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_silhouette(image, path: PathLike) -> None:
    """Binary PGM, byte = round-half-up(255 * v)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise FormatError(f"expected a 2D image, got shape {img.shape}")
    # renders can overshoot 1 by a few ulps from trilinear round-off
    if not np.all(np.isfinite(img)) or img.min() < -1e-9 or img.max() > 1 + 1e-9:
        raise FormatError("silhouette values must lie in [0, 1]")
    h, w = img.shape
    data = np.floor(255.0 * np.clip(img, 0.0, 1.0) + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(data.tobytes())


_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*([^\s#]+)")


def read_silhouette(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    fields, pos = [], 0
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise FormatError(f"{path}: truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        w, h, maxval = (int(x) for x in fields[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if w < 1 or h < 1 or not 0 < maxval < 256:
        raise FormatError(f"{path}: unsupported PGM geometry {w}x{h} maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    pixels = data[pos:pos + w * h]
    if len(pixels) != w * h:
        raise FormatError(f"{path}: expected {w * h} pixel bytes, found {len(pixels)}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w).astype(np.float64) / maxval


def write_mesh_obj(mesh, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def write_xyz(points, path: PathLike) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in pts.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")


def read_xyz(path: PathLike) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 'x y z'")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def read_json(path: PathLike):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc


def write_json(obj, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def read_viewpoint(path: PathLike) -> Viewpoint:
    d = read_json(path)
    try:
        return Viewpoint.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad viewpoint ({exc})") from exc


def write_viewpoint(view: Viewpoint, path: PathLike) -> None:
    write_json(view.to_dict(), path)


def write_viewpoints(views: List[Viewpoint], path: PathLike) -> None:
    write_json([v.to_dict() for v in views], path)


def read_camera(path: PathLike) -> CameraModel:
    try:
        return CameraModel.from_dict(read_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: bad camera ({exc})") from exc
