"""Recover shape and viewpoint from silhouettes by direct gradient descent.

The shape is a latent grid ``w`` with occupancy ``V = sigmoid(w)``, started
at the (clamped) mean shape. Steps are scaled per parameter by a running RMS
of the gradient and halved whenever they would increase the objective, so
every loss trace is non-increasing.

Poses are fitted by multi-start descent over (azimuth, elevation): seeds sit
on a regular azimuth grid times an elevation grid over [0, 40] degrees.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .camera import ELEVATION_MAX, ELEVATION_MIN, CameraModel, Viewpoint
from .projector import render_loss_and_grad
from .voxel import VoxelGrid, as_grid

log = logging.getLogger(__name__)

LATENT_EPS = 1e-3
_EL_LO, _EL_HI = math.radians(ELEVATION_MIN), math.radians(ELEVATION_MAX)


class FitError(ValueError):
    pass


@dataclass
class Observation:
    silhouette: np.ndarray
    viewpoint: Optional[Viewpoint] = None

    def __post_init__(self):
        self.silhouette = np.asarray(self.silhouette, dtype=np.float64)
        if self.silhouette.ndim != 2:
            raise FitError(f"silhouette must be 2D, got shape {self.silhouette.shape}")


@dataclass
class FitConfig:
    max_iterations: int = 500
    step_size: float = 0.5
    residual_penalty: float = 0.0
    pose_stage_iterations: int = 200
    pose_restarts: Tuple[int, int] = (24, 3)
    convergence_tol: float = 1e-5
    rng_seed: int = 0
    pose_step_deg: float = 2.0
    pose_seed_jitter_deg: float = 0.0
    pose_refine_top_k: Optional[int] = None
    rms_decay: float = 0.9
    smooth_tau: Optional[float] = None

    def __post_init__(self):
        self.pose_restarts = tuple(int(x) for x in self.pose_restarts)
        counts = (self.max_iterations, self.pose_stage_iterations, *self.pose_restarts)
        if len(self.pose_restarts) != 2 or min(counts) < 1:
            raise FitError("iteration and restart counts must be >= 1")
        if not self.step_size > 0 or not self.pose_step_deg > 0:
            raise FitError("step sizes must be positive")
        if self.residual_penalty < 0:
            raise FitError("residual_penalty must be >= 0")
        if self.pose_refine_top_k is not None and self.pose_refine_top_k < 1:
            raise FitError("pose_refine_top_k must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pose_restarts"] = list(self.pose_restarts)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise FitError(f"unknown FitConfig keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class FitReport:
    final_shape: VoxelGrid
    final_viewpoints: List[Viewpoint]
    loss_trace: List[float]
    converged: bool
    iterations_used: int
    residual: np.ndarray = field(repr=False)
    view_losses: List[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1]

    def to_dict(self) -> dict:
        return {
            "loss_trace": [float(x) for x in self.loss_trace],
            "final_loss": float(self.final_loss),
            "converged": bool(self.converged),
            "iterations_used": int(self.iterations_used),
            "view_losses": [float(x) for x in self.view_losses],
            "final_viewpoints": [v.to_dict() for v in self.final_viewpoints],
        }


@dataclass
class PoseResult:
    viewpoint: Viewpoint
    loss: float
    converged: bool
    seed_losses: List[float] = field(default_factory=list, repr=False)

    def __iter__(self):
        # unpacks as (viewpoint, loss)
        return iter((self.viewpoint, self.loss))


def _sigmoid(w):
    return 0.5 * (1.0 + np.tanh(0.5 * w))


def _logit(v):
    return np.log(v) - np.log1p(-v)


class _RMSScaler:
    def __init__(self, shape, decay: float):
        self.sq = np.zeros(shape)
        self.decay = decay
        self.t = 0

    def __call__(self, g):
        self.t += 1
        self.sq = self.decay * self.sq + (1.0 - self.decay) * g * g
        rms = np.sqrt(self.sq / (1.0 - self.decay ** self.t))
        return np.divide(g, rms, out=np.zeros_like(g, dtype=np.float64), where=rms > 0)


def _wrap_az(az: float) -> float:
    return az % (2 * math.pi)


def _to_view(az: float, el: float) -> Viewpoint:
    return Viewpoint(math.degrees(_wrap_az(az)), min(max(math.degrees(el), ELEVATION_MIN), ELEVATION_MAX))


def _check_targets(observations, cam):
    for ob in observations:
        if ob.silhouette.shape != tuple(cam.image_dims):
            raise FitError(f"silhouette dims {ob.silhouette.shape} != camera image dims {cam.image_dims}")


class _Objective:
    """Sum of per-view silhouette losses plus the L1 pull toward the mean."""

    def __init__(self, mean: np.ndarray, targets: Sequence[np.ndarray], cam: CameraModel, cfg: FitConfig):
        self.mean = mean
        self.targets = list(targets)
        self.cam = cam
        self.penalty = cfg.residual_penalty
        self.tau = cfg.smooth_tau

    def __call__(self, values, angles, want_voxels=True, want_angles=False):
        total = 0.0
        grad = np.zeros_like(values) if want_voxels else None
        dangles = np.zeros((len(self.targets), 2))
        per_view = []
        for i, (target, (az, el)) in enumerate(zip(self.targets, angles)):
            loss, _, gv, da, de = render_loss_and_grad(
                values, self.cam, az, el, target, want_voxels, want_angles, self.tau)
            total += loss
            per_view.append(loss)
            if want_voxels:
                grad += gv
            dangles[i] = da, de
        if self.penalty > 0:
            diff = values - self.mean
            total += self.penalty * float(np.abs(diff).sum())
            if want_voxels:
                grad += self.penalty * np.sign(diff)
        return total, grad, dangles, per_view


def _shape_step(objective, w, values, angles, state, scaler, lr, min_lr, want_angles=False):
    """One backtracking step on the latent grid.

    ``state`` is ``(loss, d_values, d_angles)``. Returns ``(w, values, state, lr, moved)``.
    """
    loss, grad_v, _ = state
    direction = scaler(grad_v * values * (1.0 - values))
    if not np.any(direction):
        return w, values, state, lr, False
    while lr >= min_lr:
        w_new = w - lr * direction
        v_new = _sigmoid(w_new)
        loss_new, grad_new, d_new, _ = objective(v_new, angles, want_angles=want_angles)
        if loss_new <= loss:
            return w_new, v_new, (loss_new, grad_new, d_new), lr, True
        lr *= 0.5
    return w, values, state, lr, False


def _pose_step(objective, values, angles, state, scaler, lr, min_lr, want_voxels=False):
    """One backtracking step on all (azimuth, elevation) pairs, in radians."""
    loss, _, dangles = state
    direction = scaler(dangles)
    if not np.any(direction):
        return angles, state, lr, False
    while lr >= min_lr:
        cand = angles - lr * direction
        cand[:, 0] = np.mod(cand[:, 0], 2 * math.pi)
        cand[:, 1] = np.clip(cand[:, 1], _EL_LO, _EL_HI)
        loss_new, grad_new, d_new, _ = objective(values, cand, want_voxels=want_voxels, want_angles=True)
        if loss_new <= loss:
            return cand, (loss_new, grad_new, d_new), lr, True
        lr *= 0.5
    return angles, state, lr, False


class _Stall:
    """Flags convergence after ``patience`` consecutive steps with relative improvement below ``tol``."""

    def __init__(self, tol: float, patience: int = 10):
        self.tol, self.patience, self.count = tol, patience, 0

    def __call__(self, old: float, new: float) -> bool:
        if old - new <= self.tol * max(abs(old), 1e-12):
            self.count += 1
        else:
            self.count = 0
        return self.count >= self.patience


def _report(values, mean, angles, trace, converged, iters, per_view) -> FitReport:
    return FitReport(
        final_shape=VoxelGrid(np.clip(values, 0.0, 1.0)),
        final_viewpoints=[_to_view(az, el) for az, el in angles],
        loss_trace=trace,
        converged=converged,
        iterations_used=iters,
        residual=values - mean,
        view_losses=per_view,
    )


def fit_shape(observations: Sequence[Observation], mean, cam: CameraModel, cfg: Optional[FitConfig] = None) -> FitReport:
    """Fit occupancies to silhouettes seen from known viewpoints."""
    cfg = cfg or FitConfig()
    observations = list(observations)
    if not observations:
        raise FitError("fit_shape needs at least one observation")
    if any(ob.viewpoint is None for ob in observations):
        raise FitError("fit_shape needs a viewpoint on every observation")
    _check_targets(observations, cam)
    mean_v = as_grid(mean).values
    angles = np.array([ob.viewpoint.radians for ob in observations])
    objective = _Objective(mean_v, [ob.silhouette for ob in observations], cam, cfg)

    w = _logit(np.clip(mean_v, LATENT_EPS, 1.0 - LATENT_EPS))
    values = _sigmoid(w)
    loss, grad, dangles, per_view = objective(values, angles)
    state = (loss, grad, dangles)
    trace = [loss]
    scaler = _RMSScaler(w.shape, cfg.rms_decay)
    stall = _Stall(cfg.convergence_tol)
    lr, min_lr = cfg.step_size, cfg.step_size * 2.0 ** -20
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        old = loss
        w, values, state, lr, moved = _shape_step(objective, w, values, angles, state, scaler, lr, min_lr)
        loss = state[0]
        trace.append(loss)
        if not moved or loss == 0.0 or stall(old, loss):
            converged = True
            break
        lr = min(cfg.step_size, lr * 1.25)
    _, _, _, per_view = objective(values, angles, want_voxels=False)
    log.info("fit_shape: %d iterations, loss %.4g -> %.4g", it, trace[0], trace[-1])
    return _report(values, mean_v, angles, trace, converged, it, per_view)


def pose_seeds(cfg: FitConfig, rng: Optional[np.random.Generator] = None) -> List[Tuple[float, float]]:
    """Seed viewpoints in degrees: regular azimuth grid times elevation grid over [0, 40]."""
    n_az, n_el = cfg.pose_restarts
    els = np.linspace(ELEVATION_MIN, ELEVATION_MAX, n_el) if n_el > 1 else np.array([(ELEVATION_MIN + ELEVATION_MAX) / 2])
    seeds = []
    for k in range(n_az):
        az = k * 360.0 / n_az
        if cfg.pose_seed_jitter_deg > 0 and rng is not None:
            az += rng.uniform(-cfg.pose_seed_jitter_deg, cfg.pose_seed_jitter_deg)
        seeds.extend((az % 360.0, float(el)) for el in els)
    return seeds


def _refine_pose(values, cam, target, az, el, cfg: FitConfig, tau):
    """Descend from one seed (radians). Returns (az, el, loss, converged)."""

    def evaluate(a, e):
        loss, _, _, da, de = render_loss_and_grad(values, cam, a, e, target, False, True, tau)
        return loss, np.array([[da, de]])

    angles = np.array([[az, el]])
    loss, d = evaluate(az, el)
    state = (loss, None, d)
    scaler = _RMSScaler((1, 2), cfg.rms_decay)
    stall = _Stall(cfg.convergence_tol, patience=5)
    lr = math.radians(cfg.pose_step_deg)
    min_lr = math.radians(1e-3)
    for _ in range(cfg.pose_stage_iterations):
        if loss == 0.0:
            return angles[0, 0], angles[0, 1], loss, True
        old = loss
        angles, state, lr, moved = _pose_step(_single(evaluate), values, angles, state, scaler, lr, min_lr)
        loss = state[0]
        if not moved or stall(old, loss):
            return angles[0, 0], angles[0, 1], loss, True
        lr = min(math.radians(cfg.pose_step_deg), lr * 1.25)
    return angles[0, 0], angles[0, 1], loss, False


def _single(evaluate):
    def objective(values, angles, want_voxels=False, want_angles=True):
        loss, d = evaluate(*angles[0])
        return loss, None, d, None
    return objective


def fit_pose(observation: Observation, shape, cam: CameraModel, cfg: Optional[FitConfig] = None) -> PoseResult:
    """Estimate the viewpoint of a silhouette given a fixed shape.

    Every seed is refined (or only the ``pose_refine_top_k`` best by initial
    loss, when set) and the lowest refined loss wins; ties go to the earlier
    seed. An empty target silhouette is reported as not converged.
    """
    cfg = cfg or FitConfig()
    _check_targets([observation], cam)
    values = as_grid(shape).values
    target = observation.silhouette
    rng = np.random.default_rng(cfg.rng_seed)
    seeds = [(math.radians(a), math.radians(e)) for a, e in pose_seeds(cfg, rng)]

    if cfg.pose_refine_top_k is not None and cfg.pose_refine_top_k < len(seeds):
        initial = [render_loss_and_grad(values, cam, a, e, target, False, False, cfg.smooth_tau)[0] for a, e in seeds]
        order = np.argsort(initial, kind="stable")[: cfg.pose_refine_top_k]
        seeds = [seeds[i] for i in sorted(order)]

    best = None
    seed_losses = []
    for az, el in seeds:
        result = _refine_pose(values, cam, target, az, el, cfg, cfg.smooth_tau)
        seed_losses.append(result[2])
        if best is None or result[2] < best[2]:
            best = result
    az, el, loss, converged = best
    if not np.any(target > 0):
        converged = False
    return PoseResult(_to_view(az, el), float(loss), bool(converged), seed_losses)


def fit_joint(observations: Sequence[Observation], mean, cam: CameraModel, cfg: Optional[FitConfig] = None,
              stages: int = 2) -> FitReport:
    """Fit shape and per-observation viewpoints from silhouettes alone.

    Stage 1 fits each pose against the frozen mean shape. Stage 2 alternates a
    pose step (all views) and a shape step per iteration. ``stages=1`` stops
    after the pose stage. ``loss_trace[0]`` is the objective right after stage 1.
    """
    cfg = cfg or FitConfig()
    observations = list(observations)
    if not observations:
        raise FitError("fit_joint needs at least one observation")
    if stages not in (1, 2):
        raise FitError("stages must be 1 or 2")
    _check_targets(observations, cam)
    mean_v = as_grid(mean).values
    w = _logit(np.clip(mean_v, LATENT_EPS, 1.0 - LATENT_EPS))
    values = _sigmoid(w)

    angles = []
    for ob in observations:
        pose = fit_pose(Observation(ob.silhouette), values, cam, cfg)
        angles.append(pose.viewpoint.radians)
    angles = np.array(angles, dtype=np.float64)

    objective = _Objective(mean_v, [ob.silhouette for ob in observations], cam, cfg)
    loss, grad, dangles, per_view = objective(values, angles, want_angles=True)
    state = (loss, grad, dangles)
    trace = [loss]
    converged = stages == 1
    it = 0
    if stages == 2:
        shape_scaler = _RMSScaler(w.shape, cfg.rms_decay)
        pose_scaler = _RMSScaler(angles.shape, cfg.rms_decay)
        shape_lr, pose_lr = cfg.step_size, math.radians(cfg.pose_step_deg)
        shape_min, pose_min = cfg.step_size * 2.0 ** -20, math.radians(1e-3)
        stall = _Stall(cfg.convergence_tol)
        for it in range(1, cfg.max_iterations + 1):
            old = loss
            angles, state, pose_lr, pose_moved = _pose_step(
                objective, values, angles, state, pose_scaler, pose_lr, pose_min, want_voxels=True)
            w, values, state, shape_lr, shape_moved = _shape_step(
                objective, w, values, angles, state, shape_scaler, shape_lr, shape_min, want_angles=True)
            loss = state[0]
            trace.append(loss)
            if not (pose_moved or shape_moved) or loss == 0.0 or stall(old, loss):
                converged = True
                break
            shape_lr = min(cfg.step_size, shape_lr * 1.25)
            pose_lr = min(math.radians(cfg.pose_step_deg), pose_lr * 1.25)
    _, _, _, per_view = objective(values, angles, want_voxels=False)
    log.info("fit_joint: %d iterations, loss %.4g -> %.4g", it, trace[0], trace[-1])
    return _report(values, mean_v, angles, trace, converged, it, per_view)
