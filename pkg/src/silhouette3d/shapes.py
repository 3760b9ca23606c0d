"""Analytic primitives voxelized by inside-testing voxel centers.

Object frame conventions: the grid spans [-0.5, 0.5]^3, azimuth turns about
y, and "up" for the furniture-like primitives is -y (image rows grow with +y).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np

from .voxel import DEFAULT_RESOLUTION, BinaryVoxelGrid, voxel_centers

PRIMITIVES = ("box", "sphere", "cylinder", "mug", "chair")
_TOL = 1e-9

_DEFAULTS: Dict[str, dict] = {
    "box": {"center": (0.0, 0.0, 0.0), "size": (0.5, 0.5, 0.5)},
    "sphere": {"center": (0.0, 0.0, 0.0), "radius": 0.35},
    "cylinder": {"center": (0.0, 0.0, 0.0), "radius": 0.25, "height": 0.6, "axis": "y"},
    "mug": {"radius": 0.22, "height": 0.6, "handle_radius": 0.14, "handle_thickness": 0.05},
    "chair": {
        "seat_width": 0.6, "seat_depth": 0.6, "seat_thickness": 0.08,
        "leg_size": 0.08, "leg_length": 0.42, "back_height": 0.42, "back_thickness": 0.08,
    },
}


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticShapeSpec:
    primitive: str
    parameters: dict = field(default_factory=dict)
    resolution: Tuple[int, int, int] = (DEFAULT_RESOLUTION,) * 3

    def __post_init__(self):
        if self.primitive not in PRIMITIVES:
            raise ShapeError(f"unknown primitive {self.primitive!r}; expected one of {PRIMITIVES}")
        unknown = set(self.parameters) - set(_DEFAULTS[self.primitive])
        if unknown:
            raise ShapeError(f"unknown {self.primitive} parameters: {sorted(unknown)}")
        res = tuple(int(r) for r in self.resolution)
        if len(res) != 3 or min(res) < 1:
            raise ShapeError(f"bad resolution {self.resolution}")
        object.__setattr__(self, "resolution", res)

    def params(self) -> dict:
        p = dict(_DEFAULTS[self.primitive])
        p.update(self.parameters)
        return p

    def to_dict(self) -> dict:
        return {"primitive": self.primitive, "parameters": dict(self.parameters),
                "resolution": list(self.resolution)}

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticShapeSpec":
        res = d.get("resolution", DEFAULT_RESOLUTION)
        if isinstance(res, int):
            res = (res,) * 3
        return cls(d["primitive"], dict(d.get("parameters", {})), tuple(res))


def _check_bounds(lo, hi):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    if np.any(lo < -0.5 - _TOL) or np.any(hi > 0.5 + _TOL):
        raise ShapeError(f"primitive extends outside the unit cube: bounds {lo} .. {hi}")


def _box(pts, center, size):
    c, half = np.asarray(center, float), np.asarray(size, float) / 2
    if np.any(half < 0):
        raise ShapeError("box size must be non-negative")
    _check_bounds(c - half, c + half)
    return np.all(np.abs(pts - c) <= half + _TOL, axis=-1)


def _sphere(pts, center, radius):
    c = np.asarray(center, float)
    if radius < 0:
        raise ShapeError("radius must be non-negative")
    _check_bounds(c - radius, c + radius)
    return np.linalg.norm(pts - c, axis=-1) < radius


_AXES = {"x": 0, "y": 1, "z": 2}


def _cylinder(pts, center, radius, height, axis="y"):
    if axis not in _AXES:
        raise ShapeError(f"axis must be one of {tuple(_AXES)}")
    if radius < 0 or height < 0:
        raise ShapeError("cylinder dimensions must be non-negative")
    c = np.asarray(center, float)
    k = _AXES[axis]
    ext = np.full(3, float(radius))
    ext[k] = height / 2
    _check_bounds(c - ext, c + ext)
    d = pts - c
    radial = np.sqrt(np.sum(np.delete(d, k, axis=-1) ** 2, axis=-1))
    return (radial < radius) & (np.abs(d[..., k]) <= height / 2 + _TOL)


def _mug(pts, radius, height, handle_radius, handle_thickness):
    body = _cylinder(pts, (0.0, 0.0, 0.0), radius, height)
    # half torus in the x-y plane, attached to the +x side of the body
    _check_bounds((-radius, -height / 2, -handle_thickness),
                  (radius + handle_radius + handle_thickness, height / 2, handle_thickness))
    x = pts[..., 0] - radius
    ring = np.sqrt(x ** 2 + pts[..., 1] ** 2) - handle_radius
    handle = (np.sqrt(ring ** 2 + pts[..., 2] ** 2) < handle_thickness) & (x >= 0)
    return body | handle


def _chair(pts, seat_width, seat_depth, seat_thickness, leg_size, leg_length, back_height, back_thickness):
    seat_y = (leg_length - back_height) / 2  # centers the chair vertically
    occ = _box(pts, (0.0, seat_y, 0.0), (seat_width, seat_thickness, seat_depth))
    leg_y = seat_y + seat_thickness / 2 + leg_length / 2
    for sx in (-1, 1):
        for sz in (-1, 1):
            c = (sx * (seat_width - leg_size) / 2, leg_y, sz * (seat_depth - leg_size) / 2)
            occ |= _box(pts, c, (leg_size, leg_length, leg_size))
    back_c = (0.0, seat_y - seat_thickness / 2 - back_height / 2, -(seat_depth - back_thickness) / 2)
    occ |= _box(pts, back_c, (seat_width, back_height, back_thickness))
    return occ


def inside(spec: SyntheticShapeSpec, pts: np.ndarray) -> np.ndarray:
    """Analytic inside test for object-frame points of shape ``(..., 3)``."""
    p = spec.params()
    if spec.primitive == "box":
        return _box(pts, p["center"], p["size"])
    if spec.primitive == "sphere":
        return _sphere(pts, p["center"], p["radius"])
    if spec.primitive == "cylinder":
        return _cylinder(pts, p["center"], p["radius"], p["height"], p["axis"])
    if spec.primitive == "mug":
        return _mug(pts, **p)
    return _chair(pts, **p)


def voxelize_primitive(spec: SyntheticShapeSpec) -> BinaryVoxelGrid:
    occ = inside(spec, voxel_centers(spec.resolution))
    return BinaryVoxelGrid(occ.astype(np.float64))


def voxelize_union(specs: Sequence[SyntheticShapeSpec]) -> BinaryVoxelGrid:
    """Voxel-wise OR of several primitives sharing one resolution."""
    specs = list(specs)
    if not specs:
        raise ShapeError("need at least one primitive")
    res = specs[0].resolution
    if any(s.resolution != res for s in specs):
        raise ShapeError("all primitives in a union must share a resolution")
    pts = voxel_centers(res)
    occ = np.zeros(res, dtype=bool)
    for s in specs:
        occ |= inside(s, pts)
    return BinaryVoxelGrid(occ.astype(np.float64))
