"""Differentiable voxel-to-silhouette rendering.

Every cell ``(n', m', l')`` of the camera-aligned output volume is a point
on the ray through pixel ``(u=m', v=n')`` at depth ``depths[l']``. The point
is taken back into the object frame (``p = R^T (p_c - t)``), turned into
continuous voxel coordinates and filled by trilinear interpolation with tent
weights ``max(0, 1 - |x - m|)``. Neighbours outside the grid count as empty.
The silhouette is the maximum of the volume along the depth axis.

Gradients use the hard-max subgradient: each pixel routes its gradient to the
first depth sample attaining the maximum. An optional log-sum-exp smooth max
(``tau``) spreads it over the whole ray instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numba
import numpy as np

from .camera import CameraModel, Viewpoint, rotation_derivatives, rotation_from_angles
from .voxel import VoxelGrid, as_grid


class RenderError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Silhouette:
    """Foreground probabilities plus, for hard-max renders, the winning depth index per pixel."""

    image: np.ndarray
    depth_index: Optional[np.ndarray] = None

    @property
    def dims(self) -> Tuple[int, int]:
        return self.image.shape

    def __array__(self, dtype=None, copy=None):
        return self.image if dtype is None else self.image.astype(dtype)


@dataclass(frozen=True, eq=False)
class RenderGradients:
    d_loss_d_voxels: np.ndarray
    d_loss_d_azimuth: float  # per radian
    d_loss_d_elevation: float  # per radian


@numba.njit(cache=True, nogil=True)
def _trilinear(values, xs, ys, zs):
    h, w, d = values.shape
    m0 = np.floor(xs)
    n0 = np.floor(ys)
    l0 = np.floor(zs)
    if m0 < -1.0 or m0 > w - 1 or n0 < -1.0 or n0 > h - 1 or l0 < -1.0 or l0 > d - 1:
        return 0.0
    fx = xs - m0
    fy = ys - n0
    fz = zs - l0
    mi = int(m0)
    ni = int(n0)
    li = int(l0)
    acc = 0.0
    for b in range(2):
        n = ni + b
        if n < 0 or n >= h:
            continue
        wy = fy if b else 1.0 - fy
        for a in range(2):
            m = mi + a
            if m < 0 or m >= w:
                continue
            wx = fx if a else 1.0 - fx
            for c in range(2):
                l = li + c
                if l < 0 or l >= d:
                    continue
                wz = fz if c else 1.0 - fz
                acc += values[n, m, l] * (wx * wy * wz)
    return acc


@numba.njit(cache=True, nogil=True)
def _march(values, rot, trans, f, cx, cy, depths, volume, smax, sarg, store):
    h, w, d = values.shape
    hp, wp = smax.shape
    nd = depths.shape[0]
    # samples farther than this from the object center have no in-grid neighbour
    reach = np.sqrt(3.0) * (0.5 + 0.5 / min(h, w, d)) + 1e-9
    for row in range(hp):
        ry = (row - cy) / f
        for col in range(wp):
            rx = (col - cx) / f
            best = -1.0
            arg = 0
            # depth interval where |z * (rx, ry, 1) - t| <= reach
            qa = rx * rx + ry * ry + 1.0
            qb = rx * trans[0] + ry * trans[1] + trans[2]
            qc = trans[0] ** 2 + trans[1] ** 2 + trans[2] ** 2 - reach * reach
            disc = qb * qb - qa * qc
            if disc < 0.0:
                znear = np.inf
                zfar = -np.inf
            else:
                root = np.sqrt(disc)
                znear = (qb - root) / qa
                zfar = (qb + root) / qa
            for k in range(nd):
                z = depths[k]
                if z < znear or z > zfar:
                    u = 0.0
                else:
                    qx = rx * z - trans[0]
                    qy = ry * z - trans[1]
                    qz = z - trans[2]
                    px = rot[0, 0] * qx + rot[1, 0] * qy + rot[2, 0] * qz
                    py = rot[0, 1] * qx + rot[1, 1] * qy + rot[2, 1] * qz
                    pz = rot[0, 2] * qx + rot[1, 2] * qy + rot[2, 2] * qz
                    u = _trilinear(values, (px + 0.5) * w - 0.5, (py + 0.5) * h - 0.5, (pz + 0.5) * d - 0.5)
                if store:
                    volume[row, col, k] = u
                if u > best:
                    best = u
                    arg = k
                    # occupancies never exceed 1, so later samples cannot win
                    if u >= 1.0 and not store:
                        break
            smax[row, col] = best
            sarg[row, col] = arg


def _values(grid) -> np.ndarray:
    if isinstance(grid, VoxelGrid):
        return grid.values
    return np.ascontiguousarray(grid, dtype=np.float64)


def _run(values, cam: CameraModel, az: float, el: float, store: bool):
    rot = rotation_from_angles(az, el, cam.elevation_axis)
    hp, wp = cam.image_dims
    depths = cam.depths()
    volume = np.zeros((hp, wp, len(depths)) if store else (1, 1, 1))
    smax = np.empty((hp, wp))
    sarg = np.empty((hp, wp), dtype=np.int64)
    i = cam.intrinsics
    _march(values, rot, cam.translation(), float(i.f), float(i.cx), float(i.cy),
           depths, volume, smax, sarg, store)
    return volume, smax, sarg


def camera_points(cam: CameraModel, rows, cols, depth_index) -> np.ndarray:
    """Camera-frame positions of output-volume cells, shape ``(..., 3)``."""
    i = cam.intrinsics
    z = cam.depths()[depth_index]
    return np.stack([(cols - i.cx) / i.f * z, (rows - i.cy) / i.f * z, z], axis=-1)


def _to_voxel_coords(points: np.ndarray, dims) -> np.ndarray:
    h, w, d = dims
    return (points + 0.5) * np.array([w, h, d], dtype=np.float64) - 0.5


def sample_coordinates(cam: CameraModel, view: Viewpoint, dims) -> np.ndarray:
    """Continuous voxel coordinates ``(x^s, y^s, z^s)`` of every output cell.

    Shape ``(H', W', D', 3)``; ``x^s`` is measured along ``m``, ``y^s`` along
    ``n`` and ``z^s`` along ``l``.
    """
    hp, wp = cam.image_dims
    rows, cols, ks = np.meshgrid(np.arange(hp), np.arange(wp), np.arange(cam.depth_samples), indexing="ij")
    q = camera_points(cam, rows, cols, ks) - cam.translation()
    rot = rotation_from_angles(*view.radians, cam.elevation_axis)
    return _to_voxel_coords(q @ rot, dims)


def resample_volume(grid, cam: CameraModel, view: Viewpoint) -> np.ndarray:
    """Camera-aligned volume ``U`` of shape ``(H', W', D')``."""
    values = _values(as_grid(grid))
    volume, _, _ = _run(values, cam, *view.radians, store=True)
    return volume


def flatten_silhouette(volume: np.ndarray) -> Silhouette:
    volume = np.asarray(volume, dtype=np.float64)
    if volume.ndim != 3:
        raise RenderError(f"expected a 3D volume, got shape {volume.shape}")
    return Silhouette(volume.max(axis=2), volume.argmax(axis=2))


def smooth_flatten(volume: np.ndarray, tau: float) -> np.ndarray:
    """``tau * log(mean(exp(U / tau)))`` along depth; lies between ``max - tau log D'`` and ``max``."""
    volume = np.asarray(volume, dtype=np.float64)
    top = volume.max(axis=2, keepdims=True)
    lse = top[..., 0] + tau * np.log(np.exp((volume - top) / tau).sum(axis=2))
    return lse - tau * np.log(volume.shape[2])


def render_silhouette(grid, cam: CameraModel, view: Viewpoint) -> Silhouette:
    values = _values(as_grid(grid))
    _, smax, sarg = _run(values, cam, *view.radians, store=False)
    return Silhouette(smax, sarg)


def silhouette_loss(pred, target) -> float:
    """Sum of squared pixel differences."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise RenderError(f"silhouette dims {pred.shape} != {target.shape}")
    return float(np.sum((target - pred) ** 2))


def _backprop(values, cam, az, el, rows, cols, ks, coeff, want_voxels, want_angles):
    """Push ``coeff = dL/dU`` at the listed output cells back to voxels and angles."""
    dims = values.shape
    h, w, d = dims
    grad_v = np.zeros(dims) if want_voxels else None
    d_az = d_el = 0.0
    keep = coeff != 0.0
    rows, cols, ks, coeff = rows[keep], cols[keep], ks[keep], coeff[keep]
    if coeff.size == 0:
        return grad_v, d_az, d_el

    q = camera_points(cam, rows, cols, ks) - cam.translation()
    rot = rotation_from_angles(az, el, cam.elevation_axis)
    coords = _to_voxel_coords(q @ rot, dims)
    base = np.floor(coords)
    frac = coords - base
    base = base.astype(np.int64)

    dval = np.zeros((coeff.size, 3))  # dU / d(x^s, y^s, z^s)
    for b in range(2):
        n = base[:, 1] + b
        wy = frac[:, 1] if b else 1.0 - frac[:, 1]
        sy = 1.0 if b else -1.0
        for a in range(2):
            m = base[:, 0] + a
            wx = frac[:, 0] if a else 1.0 - frac[:, 0]
            sx = 1.0 if a else -1.0
            for c in range(2):
                l = base[:, 2] + c
                wz = frac[:, 2] if c else 1.0 - frac[:, 2]
                sz = 1.0 if c else -1.0
                ok = (n >= 0) & (n < h) & (m >= 0) & (m < w) & (l >= 0) & (l < d)
                if not ok.any():
                    continue
                flat = (n[ok] * w + m[ok]) * d + l[ok]
                if want_voxels:
                    np.add.at(grad_v.reshape(-1), flat, coeff[ok] * (wx[ok] * wy[ok] * wz[ok]))
                if want_angles:
                    v = values.reshape(-1)[flat]
                    dval[ok, 0] += v * sx * wy[ok] * wz[ok]
                    dval[ok, 1] += v * wx[ok] * sy * wz[ok]
                    dval[ok, 2] += v * wx[ok] * wy[ok] * sz

    if want_angles:
        scale = np.array([w, h, d], dtype=np.float64)
        dr_az, dr_el = rotation_derivatives(az, el, cam.elevation_axis)
        g = coeff[:, None] * dval * scale
        d_az = float(np.sum(g * (q @ dr_az)))
        d_el = float(np.sum(g * (q @ dr_el)))
    return grad_v, d_az, d_el


def render_loss_and_grad(values: np.ndarray, cam: CameraModel, az: float, el: float, target: np.ndarray,
                         want_voxels: bool = True, want_angles: bool = True, tau: Optional[float] = None):
    """Loss and gradients for raw arrays and angles in radians.

    Returns ``(loss, image, d_loss_d_values or None, d_loss_d_az, d_loss_d_el)``.
    """
    if target.shape != tuple(cam.image_dims):
        raise RenderError(f"target dims {target.shape} != camera image dims {cam.image_dims}")
    hp, wp = cam.image_dims
    if tau is None:
        _, image, arg = _run(values, cam, az, el, store=False)
        coeff = 2.0 * (image - target)
        rows, cols = np.indices((hp, wp))
        args = (rows.ravel(), cols.ravel(), arg.ravel(), coeff.ravel())
    else:
        volume, _, _ = _run(values, cam, az, el, store=True)
        image = smooth_flatten(volume, tau)
        soft = np.exp((volume - volume.max(axis=2, keepdims=True)) / tau)
        soft /= soft.sum(axis=2, keepdims=True)
        coeff = 2.0 * (image - target)[..., None] * soft
        rows, cols, ks = np.indices(volume.shape)
        args = (rows.ravel(), cols.ravel(), ks.ravel(), coeff.ravel())
    loss = float(np.sum((target - image) ** 2))
    grad_v, d_az, d_el = _backprop(values, cam, az, el, *args, want_voxels, want_angles)
    return loss, image, grad_v, d_az, d_el


def render_with_gradients(grid, cam: CameraModel, view: Viewpoint, target,
                          tau: Optional[float] = None) -> Tuple[float, RenderGradients]:
    """Silhouette loss against ``target`` and its gradients w.r.t. voxels and angles."""
    values = _values(as_grid(grid))
    target = np.asarray(target, dtype=np.float64)
    loss, _, gv, d_az, d_el = render_loss_and_grad(values, cam, *view.radians, target, tau=tau)
    return loss, RenderGradients(gv, d_az, d_el)
