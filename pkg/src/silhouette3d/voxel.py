"""Occupancy grids, mean shapes and binarization.

Grids are indexed ``values[n, m, l]`` where ``m`` runs along object x,
``n`` along object y and ``l`` along object z. Voxel ``(n, m, l)`` has its
center at ``((m + .5)/W - .5, (n + .5)/H - .5, (l + .5)/D - .5)`` so the
whole grid spans the cube ``[-0.5, 0.5]^3``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

DEFAULT_RESOLUTION = 32
THRESHOLD_GRID = tuple(k / 20 for k in range(1, 20))


class GridError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Dense occupancy field with values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 3 or min(v.shape) < 1:
            raise GridError(f"expected a non-empty 3D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise GridError("occupancy values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(s) for s in self.values.shape)

    @classmethod
    def zeros(cls, dims=(DEFAULT_RESOLUTION,) * 3):
        return cls(np.zeros(dims))

    @classmethod
    def full(cls, dims=(DEFAULT_RESOLUTION,) * 3, value: float = 1.0):
        return cls(np.full(dims, float(value)))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return self.dims == other.dims and bool(np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"{type(self).__name__}(dims={self.dims}, mean={self.values.mean():.4f})"


class BinaryVoxelGrid(VoxelGrid):
    """Occupancy grid whose values are exactly 0 or 1."""

    def __post_init__(self):
        super().__post_init__()
        if not np.all((self.values == 0.0) | (self.values == 1.0)):
            raise GridError("binary grid values must be exactly 0 or 1")

    @property
    def occupied(self) -> np.ndarray:
        return self.values > 0.5

    def count(self) -> int:
        return int(np.count_nonzero(self.values))


def as_grid(grid) -> VoxelGrid:
    return grid if isinstance(grid, VoxelGrid) else VoxelGrid(np.asarray(grid))


def as_binary(grid) -> BinaryVoxelGrid:
    if isinstance(grid, BinaryVoxelGrid):
        return grid
    return BinaryVoxelGrid(np.asarray(grid, dtype=np.float64))


def voxel_centers(dims: Sequence[int]) -> np.ndarray:
    """Object-frame centers of every voxel, shape ``(H, W, D, 3)`` as (x, y, z)."""
    h, w, d = dims
    ys = (np.arange(h) + 0.5) / h - 0.5
    xs = (np.arange(w) + 0.5) / w - 0.5
    zs = (np.arange(d) + 0.5) / d - 0.5
    n, m, l = np.meshgrid(ys, xs, zs, indexing="ij")
    return np.stack([m, n, l], axis=-1)


def compose_shape(mean: VoxelGrid, residual) -> VoxelGrid:
    """Add a residual to the mean shape, clamping the sum to [0, 1]."""
    mean = as_grid(mean)
    residual = np.asarray(residual, dtype=np.float64)
    if residual.shape != mean.dims:
        raise GridError(f"residual dims {residual.shape} != mean dims {mean.dims}")
    return VoxelGrid(np.clip(mean.values + residual, 0.0, 1.0))


def compute_mean_shape(grids: Iterable) -> VoxelGrid:
    """Per-voxel average occupancy of aligned binary grids."""
    grids = [as_binary(g) for g in grids]
    if not grids:
        raise GridError("cannot average an empty list of grids")
    dims = grids[0].dims
    total = np.zeros(dims)
    for g in grids:
        if g.dims != dims:
            raise GridError(f"grid dims {g.dims} != {dims}")
        total += g.values
    return VoxelGrid(np.clip(total / len(grids), 0.0, 1.0))


def binarize(grid, threshold: float) -> BinaryVoxelGrid:
    """Occupied iff value >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise GridError(f"threshold must be in (0, 1), got {threshold}")
    grid = as_grid(grid)
    return BinaryVoxelGrid((grid.values >= threshold).astype(np.float64))


def _iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def select_threshold(pairs, candidates: Sequence[float] = THRESHOLD_GRID) -> float:
    """Pick the binarization threshold maximizing mean IoU over (prediction, truth) pairs.

    Ties resolve to the smallest candidate.
    """
    pairs = [(as_grid(p), as_binary(t)) for p, t in pairs]
    if not pairs:
        raise GridError("need at least one (prediction, truth) pair")
    for p, t in pairs:
        if p.dims != t.dims:
            raise GridError(f"prediction dims {p.dims} != truth dims {t.dims}")
    best_t, best_score = candidates[0], -1.0
    for t in candidates:
        score = float(np.mean([_iou(p.values >= t, g.occupied) for p, g in pairs]))
        if score > best_score:
            best_t, best_score = t, score
    return best_t
