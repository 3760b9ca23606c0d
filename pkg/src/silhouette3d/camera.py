"""Azimuth/elevation viewpoints and the pinhole projection used for rendering.

The rotation is ``R = R_az @ R_el`` with

    R_az = [[ cos a, 0, sin a],      R_el = [[ cos e, sin e, 0],
            [     0, 1,     0],              [-sin e, cos e, 0],
            [-sin a, 0, cos a]]              [     0,     0, 1]]

Note that ``R_el`` as written mixes x and y, i.e. it turns about the z axis.
That form is the default (``elevation_axis="paper"``). Passing
``elevation_axis="conventional"`` swaps in a turn about the x axis instead.

Camera-frame points are ``p_c = R @ p + t`` with ``t = (0, 0, distance)``;
pixels follow ``u = f x_c / z_c + cx`` and ``v = f y_c / z_c + cy``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

ELEVATION_MIN = 0.0
ELEVATION_MAX = 40.0
ELEVATION_AXES = ("paper", "conventional")


class CameraError(ValueError):
    pass


@dataclass(frozen=True)
class Viewpoint:
    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self):
        az, el = float(self.azimuth_deg), float(self.elevation_deg)
        if not (math.isfinite(az) and math.isfinite(el)):
            raise CameraError("viewpoint angles must be finite")
        if not ELEVATION_MIN <= el <= ELEVATION_MAX:
            raise CameraError(f"elevation {el} outside [{ELEVATION_MIN}, {ELEVATION_MAX}]")
        az = az % 360.0
        if az >= 360.0:  # -1e-15 % 360 rounds to 360.0
            az = 0.0
        object.__setattr__(self, "azimuth_deg", az)
        object.__setattr__(self, "elevation_deg", el)

    @property
    def radians(self) -> Tuple[float, float]:
        return math.radians(self.azimuth_deg), math.radians(self.elevation_deg)

    def to_dict(self) -> dict:
        return {"azimuth_deg": self.azimuth_deg, "elevation_deg": self.elevation_deg}

    @classmethod
    def from_dict(cls, d: dict) -> "Viewpoint":
        return cls(float(d["azimuth_deg"]), float(d["elevation_deg"]))


@dataclass(frozen=True)
class Intrinsics:
    f: float = 64.0
    cx: float = 31.5
    cy: float = 31.5

    def __post_init__(self):
        if not self.f > 0:
            raise CameraError(f"focal length must be positive, got {self.f}")

    def matrix(self) -> np.ndarray:
        return np.array([[self.f, 0.0, self.cx], [0.0, self.f, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CameraModel:
    """Fixed intrinsics, axial object distance and the sampling of the output volume.

    ``depth_range`` defaults to ``distance -/+ 0.75``; the ``depth_samples``
    planes are spread evenly over it, endpoints included.
    """

    intrinsics: Intrinsics = field(default_factory=Intrinsics)
    distance: float = 1.7
    image_dims: Tuple[int, int] = (64, 64)
    depth_samples: int = 64
    depth_range: Optional[Tuple[float, float]] = None
    elevation_axis: str = "paper"

    def __post_init__(self):
        if not self.distance > math.sqrt(3) / 2:
            raise CameraError("camera must sit outside the object cube (distance > sqrt(3)/2)")
        dims = tuple(int(s) for s in self.image_dims)
        if len(dims) != 2 or min(dims) < 1:
            raise CameraError(f"bad image dims {self.image_dims}")
        object.__setattr__(self, "image_dims", dims)
        if int(self.depth_samples) < 1:
            raise CameraError("depth_samples must be >= 1")
        if self.depth_range is None:
            rng = (self.distance - 0.75, self.distance + 0.75)
        else:
            rng = tuple(float(x) for x in self.depth_range)
        if not 0 < rng[0] <= rng[1]:
            raise CameraError(f"depth range must be positive and ordered, got {rng}")
        object.__setattr__(self, "depth_range", rng)
        if self.elevation_axis not in ELEVATION_AXES:
            raise CameraError(f"elevation_axis must be one of {ELEVATION_AXES}")

    @classmethod
    def scaled(cls, size: int, depth_samples: Optional[int] = None, **kw) -> "CameraModel":
        """Default camera re-targeted to a ``size x size`` image with matching focal length."""
        intr = Intrinsics(f=float(size), cx=(size - 1) / 2, cy=(size - 1) / 2)
        return cls(intr, image_dims=(size, size), depth_samples=depth_samples or size, **kw)

    def depths(self) -> np.ndarray:
        near, far = self.depth_range
        return np.linspace(near, far, int(self.depth_samples))

    def translation(self) -> np.ndarray:
        return np.array([0.0, 0.0, float(self.distance)])

    def to_dict(self) -> dict:
        i = self.intrinsics
        return {
            "f": i.f, "cx": i.cx, "cy": i.cy,
            "distance": self.distance,
            "image_height": self.image_dims[0], "image_width": self.image_dims[1],
            "depth_samples": self.depth_samples,
            "depth_near": self.depth_range[0], "depth_far": self.depth_range[1],
            "elevation_axis": self.elevation_axis,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        base = cls()
        intr = Intrinsics(
            float(d.get("f", base.intrinsics.f)),
            float(d.get("cx", base.intrinsics.cx)),
            float(d.get("cy", base.intrinsics.cy)),
        )
        distance = float(d.get("distance", base.distance))
        rng = None
        if "depth_near" in d or "depth_far" in d:
            rng = (float(d.get("depth_near", distance - 0.75)), float(d.get("depth_far", distance + 0.75)))
        return cls(
            intrinsics=intr,
            distance=distance,
            image_dims=(int(d.get("image_height", 64)), int(d.get("image_width", 64))),
            depth_samples=int(d.get("depth_samples", 64)),
            depth_range=rng,
            elevation_axis=d.get("elevation_axis", "paper"),
        )


def azimuth_matrix(az: float) -> np.ndarray:
    c, s = math.cos(az), math.sin(az)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def azimuth_matrix_derivative(az: float) -> np.ndarray:
    c, s = math.cos(az), math.sin(az)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def elevation_matrix(el: float, axis: str = "paper") -> np.ndarray:
    c, s = math.cos(el), math.sin(el)
    if axis == "paper":
        return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    if axis == "conventional":
        return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])
    raise CameraError(f"unknown elevation axis {axis!r}")


def elevation_matrix_derivative(el: float, axis: str = "paper") -> np.ndarray:
    c, s = math.cos(el), math.sin(el)
    if axis == "paper":
        return np.array([[-s, c, 0.0], [-c, -s, 0.0], [0.0, 0.0, 0.0]])
    if axis == "conventional":
        return np.array([[0.0, 0.0, 0.0], [0.0, -s, c], [0.0, -c, -s]])
    raise CameraError(f"unknown elevation axis {axis!r}")


def rotation_from_angles(az: float, el: float, elevation_axis: str = "paper") -> np.ndarray:
    """``R_az @ R_el`` for angles in radians."""
    return azimuth_matrix(az) @ elevation_matrix(el, elevation_axis)


def rotation_derivatives(az: float, el: float, elevation_axis: str = "paper"):
    """Return ``(dR/d_az, dR/d_el)`` per radian."""
    ra, re = azimuth_matrix(az), elevation_matrix(el, elevation_axis)
    return (
        azimuth_matrix_derivative(az) @ re,
        ra @ elevation_matrix_derivative(el, elevation_axis),
    )


def rotation_from_viewpoint(view: Viewpoint, elevation_axis: str = "paper") -> np.ndarray:
    az, el = view.radians
    return rotation_from_angles(az, el, elevation_axis)


def extrinsic_matrix(cam: CameraModel, view: Viewpoint) -> np.ndarray:
    e = np.eye(4)
    e[:3, :3] = rotation_from_viewpoint(view, cam.elevation_axis)
    e[:3, 3] = cam.translation()
    return e


def projection_matrix(cam: CameraModel, view: Viewpoint) -> np.ndarray:
    """4x4 homogeneous ``[K 0; 0 1] @ [R t; 0 1]``."""
    k = np.eye(4)
    k[:3, :3] = cam.intrinsics.matrix()
    return k @ extrinsic_matrix(cam, view)


def object_to_pixel(cam: CameraModel, view: Viewpoint, point) -> Tuple[float, float, float]:
    """Project an object-frame point to ``(u, v, depth)``."""
    p = np.asarray(point, dtype=np.float64)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise CameraError(f"point must be 3 finite coordinates, got {point!r}")
    pc = rotation_from_viewpoint(view, cam.elevation_axis) @ p + cam.translation()
    if pc[2] <= 0:
        raise CameraError(f"point lies behind the camera (depth {pc[2]})")
    i = cam.intrinsics
    return (i.f * pc[0] / pc[2] + i.cx, i.f * pc[1] / pc[2] + i.cy, float(pc[2]))
