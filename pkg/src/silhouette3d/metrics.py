"""Shape and pose evaluation: voxel IoU, rotation error, point-cloud distances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .camera import Viewpoint, rotation_from_viewpoint
from .voxel import BinaryVoxelGrid, GridError, as_binary

HAUSDORFF_MODES = ("paper-averaged", "classic")
ACC_THRESHOLD_DEG = 30.0


class MetricError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    unit: str = "object"

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise MetricError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class PoseErrorSummary:
    median_error_deg: float
    acc_pi_6: float
    per_instance_errors: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "median_error_deg": self.median_error_deg,
            "acc_pi_6": self.acc_pi_6,
            "per_instance_errors": list(self.per_instance_errors),
        }


def voxel_iou(a, b) -> float:
    """|a and b| / |a or b|; two empty grids score 1."""
    a, b = as_binary(a), as_binary(b)
    if a.dims != b.dims:
        raise GridError(f"grid dims {a.dims} != {b.dims}")
    oa, ob = a.occupied, b.occupied
    union = np.count_nonzero(oa | ob)
    if union == 0:
        return 1.0
    return np.count_nonzero(oa & ob) / union


def angular_distance(a: Viewpoint, b: Viewpoint, elevation_axis: str = "paper") -> float:
    """Geodesic angle in degrees between the two camera rotations."""
    rel = rotation_from_viewpoint(a, elevation_axis) @ rotation_from_viewpoint(b, elevation_axis).T
    # atan2(sin, cos) keeps full precision near 0 and 180 where arccos does not
    axis = np.array([rel[2, 1] - rel[1, 2], rel[0, 2] - rel[2, 0], rel[1, 0] - rel[0, 1]])
    cos = np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0)
    sin = np.linalg.norm(axis) / 2.0
    return math.degrees(math.atan2(sin, cos))


def summarize_pose_errors(pairs: Sequence[Tuple[Viewpoint, Viewpoint]], elevation_axis: str = "paper") -> PoseErrorSummary:
    """Median angular error (lower middle for even counts) and fraction under 30 degrees."""
    pairs = list(pairs)
    if not pairs:
        raise MetricError("need at least one (predicted, truth) pair")
    errors = [angular_distance(p, t, elevation_axis) for p, t in pairs]
    ordered = sorted(errors)
    median = ordered[(len(ordered) - 1) // 2]
    acc = sum(e < ACC_THRESHOLD_DEG for e in errors) / len(errors)
    return PoseErrorSummary(median, acc, errors)


def voxels_to_pointcloud(grid, scale: float = 1.0, unit: str = "object") -> PointCloud:
    """One point per occupied voxel center, scaled by ``scale`` units per object cube."""
    grid = as_binary(grid)
    n, m, l = np.nonzero(grid.occupied)
    if n.size == 0:
        raise MetricError("cannot convert an empty grid to a point cloud")
    h, w, d = grid.dims
    pts = np.stack([(m + 0.5) / w - 0.5, (n + 0.5) / h - 0.5, (l + 0.5) / d - 0.5], axis=1)
    return PointCloud(pts * scale, unit)


def pointcloud_to_voxels(pc: PointCloud, dims, scale: float = 1.0) -> BinaryVoxelGrid:
    """Mark every voxel containing at least one point; points outside the cube are dropped."""
    h, w, d = dims
    p = pc.points / scale + 0.5
    idx = np.floor(p * np.array([w, h, d])).astype(np.int64)
    ok = np.all((idx >= 0) & (idx < np.array([w, h, d])), axis=1)
    out = np.zeros((h, w, d))
    out[idx[ok, 1], idx[ok, 0], idx[ok, 2]] = 1.0
    return BinaryVoxelGrid(out)


def cloud_density(pc: PointCloud, rng_seed: int = 0) -> float:
    """Mean nearest-neighbour distance over a seeded random tenth of the points."""
    pts = pc.points
    if len(pts) < 2:
        raise MetricError("cloud_density needs at least two points")
    k = math.ceil(len(pts) / 10)
    sample = np.random.default_rng(rng_seed).choice(len(pts), size=k, replace=False)
    dist, _ = cKDTree(pts).query(pts[sample], k=2)
    # column 0 is the query point itself (distance 0)
    return float(np.mean(dist[:, 1]))


def directed_distances(a: PointCloud, b: PointCloud) -> np.ndarray:
    """Distance from each point of ``a`` to its closest point of ``b``."""
    if len(a) == 0 or len(b) == 0:
        raise MetricError("point clouds must be non-empty")
    dist, _ = cKDTree(b.points).query(a.points, k=1)
    return dist


def symmetric_hausdorff(a: PointCloud, b: PointCloud, mode: str = "paper-averaged") -> float:
    """Average of the two directed distances.

    ``"paper-averaged"`` reduces each direction by the mean closest-point
    distance; ``"classic"`` uses the maximum.
    """
    if mode not in HAUSDORFF_MODES:
        raise MetricError(f"mode must be one of {HAUSDORFF_MODES}")
    if a.unit != b.unit:
        raise MetricError(f"unit mismatch: {a.unit!r} vs {b.unit!r}")
    reduce = np.mean if mode == "paper-averaged" else np.max
    return float((reduce(directed_distances(a, b)) + reduce(directed_distances(b, a))) / 2)
