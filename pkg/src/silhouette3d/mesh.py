"""Occupancy grid to triangle mesh via marching cubes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .voxel import as_grid


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) object coordinates
    triangles: np.ndarray  # (T, 3) vertex indices

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle index out of range")
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise MeshError("degenerate triangle")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    def edge_counts(self) -> dict:
        """How many triangles use each undirected edge."""
        e = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]])
        e.sort(axis=1)
        keys, counts = np.unique(e, axis=0, return_counts=True)
        return {tuple(k): int(c) for k, c in zip(keys, counts)}

    def signed_volume(self) -> float:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def marching_cubes(grid, isolevel: float = 0.5) -> TriangleMesh:
    """Isosurface of the occupancy field with vertices in object coordinates.

    The lattice points are the voxel centers; no padding is added, so shapes
    touching the grid border yield open surfaces there. Triangles are wound
    counter-clockwise seen from outside (low occupancy).
    """
    from skimage.measure import marching_cubes as _skimage_mc

    if not 0.0 < isolevel < 1.0:
        raise MeshError(f"isolevel must be in (0, 1), got {isolevel}")
    values = as_grid(grid).values
    if min(values.shape) < 2 or values.max() <= isolevel or values.min() >= isolevel:
        return TriangleMesh.empty()
    verts, faces, _, _ = _skimage_mc(values, isolevel, method="lorensen", allow_degenerate=False)
    h, w, d = values.shape
    # skimage vertices are (n, m, l) lattice coordinates
    xyz = np.stack([(verts[:, 1] + 0.5) / w - 0.5, (verts[:, 0] + 0.5) / h - 0.5, (verts[:, 2] + 0.5) / d - 0.5], axis=1)
    faces = faces.astype(np.int64)
    mesh = TriangleMesh(xyz, faces)
    if mesh.triangles.size and mesh.signed_volume() < 0:
        mesh = TriangleMesh(xyz, faces[:, ::-1])
    return mesh
