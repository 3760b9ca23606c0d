"""Independent reference computations and shared test shapes."""

import math

import numpy as np

from silhouette3d.camera import Viewpoint, extrinsic_matrix
from silhouette3d.shapes import SyntheticShapeSpec, voxelize_union


def asymmetric_shape(res=32):
    """Box body with an off-axis knob and post: no mirror or rotational symmetry."""
    r = (res,) * 3
    return voxelize_union([
        SyntheticShapeSpec("box", {"center": (-0.05, 0.05, 0.0), "size": (0.5, 0.3, 0.3)}, r),
        SyntheticShapeSpec("sphere", {"center": (0.22, -0.12, 0.12), "radius": 0.12}, r),
        SyntheticShapeSpec("cylinder", {"center": (-0.15, -0.2, -0.15), "radius": 0.06, "height": 0.3}, r),
    ])


def tent(x, n):
    """max(0, 1 - |x - k|) for k = 0..n-1."""
    return np.maximum(0.0, 1.0 - np.abs(x - np.arange(n)))


def eq6_sample(values, xs, ys, zs):
    """Direct triple sum over every voxel of V * tent_x * tent_y * tent_z."""
    h, w, d = values.shape
    return float(np.einsum("n,m,l,nml->", tent(ys, h), tent(xs, w), tent(zs, d), values))


def sample_coords_oracle(cam, view, dims, row, col, k):
    """Continuous voxel coordinates of one output cell via the inverse 4x4 extrinsic."""
    i = cam.intrinsics
    z = cam.depths()[k]
    pc = np.array([(col - i.cx) * z / i.f, (row - i.cy) * z / i.f, z, 1.0])
    p = np.linalg.inv(extrinsic_matrix(cam, view)) @ pc
    h, w, d = dims
    return (p[0] + 0.5) * w - 0.5, (p[1] + 0.5) * h - 0.5, (p[2] + 0.5) * d - 0.5


def circular_diff(a, b):
    return abs((a - b + 180.0) % 360.0 - 180.0)


def random_view(rng):
    return Viewpoint(rng.uniform(0, 360), rng.uniform(0, 40))


def radians_view(view):
    return math.radians(view.azimuth_deg), math.radians(view.elevation_deg)
