"""Command line entry point: ``silhouette3d <command> ...``.

Exit codes: 0 success, 1 usage error, 2 I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

import numpy as np

from . import formats
from .camera import CameraModel, Viewpoint
from .fitter import FitConfig, Observation, fit_joint, fit_pose, fit_shape
from .formats import FormatError
from .mesh import marching_cubes
from .metrics import (
    HAUSDORFF_MODES,
    PointCloud,
    cloud_density,
    summarize_pose_errors,
    symmetric_hausdorff,
    voxel_iou,
    voxels_to_pointcloud,
)
from .projector import render_silhouette
from .shapes import SyntheticShapeSpec, voxelize_primitive
from .voxel import as_binary, binarize, compute_mean_shape, select_threshold

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _camera(args) -> CameraModel:
    return formats.read_camera(args.camera) if args.camera else CameraModel()


def _config(args) -> FitConfig:
    d = formats.read_json(args.config) if args.config else {}
    if args.seed is not None:
        d["rng_seed"] = args.seed
    try:
        return FitConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad fit config: {exc}") from exc


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_gen(args):
    spec = SyntheticShapeSpec.from_dict(formats.read_json(args.spec))
    formats.write_voxels(voxelize_primitive(spec), args.output)


def cmd_mean(args):
    grids = [as_binary(formats.read_voxels(p)) for p in args.grids]
    formats.write_voxels(compute_mean_shape(grids), args.output)


def cmd_render(args):
    grid = formats.read_voxels(args.grid)
    sil = render_silhouette(grid, _camera(args), formats.read_viewpoint(args.view))
    formats.write_silhouette(sil.image, args.output)


def _write_fit(report, args):
    formats.write_voxels(report.final_shape, args.output)
    if args.views_out:
        formats.write_viewpoints(report.final_viewpoints, args.views_out)
    if args.report:
        formats.write_json(report.to_dict(), args.report)


def cmd_fit_shape(args):
    obs = [Observation(formats.read_silhouette(p), formats.read_viewpoint(v)) for p, v in args.obs]
    report = fit_shape(obs, formats.read_voxels(args.mean), _camera(args), _config(args))
    _write_fit(report, args)


def cmd_fit_pose(args):
    obs = Observation(formats.read_silhouette(args.silhouette))
    result = fit_pose(obs, formats.read_voxels(args.shape), _camera(args), _config(args))
    formats.write_viewpoint(result.viewpoint, args.output)
    if args.report:
        formats.write_json({"viewpoint": result.viewpoint.to_dict(), "loss": result.loss,
                            "converged": result.converged}, args.report)


def cmd_fit_joint(args):
    obs = [Observation(formats.read_silhouette(p)) for p in args.silhouette]
    report = fit_joint(obs, formats.read_voxels(args.mean), _camera(args), _config(args))
    _write_fit(report, args)


def cmd_eval_iou(args):
    preds = [formats.read_voxels(p) for p, _ in args.pair]
    truths = [as_binary(formats.read_voxels(t)) for _, t in args.pair]
    if args.threshold == "auto":
        t = select_threshold(list(zip(preds, truths)))
    else:
        try:
            t = float(args.threshold)
        except ValueError:
            raise UsageError(f"--threshold must be a number or 'auto', got {args.threshold!r}")
    scores = [voxel_iou(binarize(p, t), g) for p, g in zip(preds, truths)]
    _emit({"threshold": t, "mean_iou": float(np.mean(scores)), "per_pair": scores})


def cmd_eval_pose(args):
    records = formats.read_json(args.pairs)
    try:
        pairs = [(Viewpoint.from_dict(r["predicted"]), Viewpoint.from_dict(r["truth"])) for r in records]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{args.pairs}: bad pose pairs ({exc})") from exc
    _emit(summarize_pose_errors(pairs).to_dict())


def _cloud(path: str, scale: float, unit: str) -> PointCloud:
    if path.endswith(".vox32"):
        return voxels_to_pointcloud(binarize(formats.read_voxels(path), 0.5), scale, unit)
    return PointCloud(formats.read_xyz(path), unit)


def cmd_eval_hausdorff(args):
    a = _cloud(args.a, args.scale, args.unit)
    b = _cloud(args.b, args.scale, args.unit)
    seed = 0 if args.seed is None else args.seed
    out = {"mode": args.mode, "hausdorff": symmetric_hausdorff(a, b, args.mode), "unit": args.unit,
           "points_a": len(a), "points_b": len(b)}
    if len(a) >= 2 and len(b) >= 2:
        out["density_a"] = cloud_density(a, seed)
        out["density_b"] = cloud_density(b, seed)
    _emit(out)


def cmd_mesh(args):
    formats.write_mesh_obj(marching_cubes(formats.read_voxels(args.grid), args.isolevel), args.output)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    # SUPPRESS keeps a subcommand's defaults from clobbering options given before it
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for all randomness")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = _Parser(prog="silhouette3d", description="Voxel silhouette rendering and shape/pose fitting.",
                parents=[common])
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    def command(name, fn, help):
        sp = sub.add_parser(name, help=help, parents=[common])
        sp.set_defaults(func=fn)
        return sp

    def camera_opt(sp):
        sp.add_argument("--camera", help="camera JSON (defaults to the built-in 64x64 camera)")

    def fit_opts(sp):
        camera_opt(sp)
        sp.add_argument("--config", help="FitConfig JSON")
        sp.add_argument("-o", "--output", required=True, help="fitted shape (.vox32)")
        sp.add_argument("--views-out", help="fitted viewpoints JSON")
        sp.add_argument("--report", help="report JSON (loss trace etc.)")

    sp = command("gen", cmd_gen, "voxelize a synthetic shape spec")
    sp.add_argument("spec", help="SyntheticShapeSpec JSON")
    sp.add_argument("-o", "--output", required=True)

    sp = command("mean", cmd_mean, "average binary grids into a mean shape")
    sp.add_argument("grids", nargs="+")
    sp.add_argument("-o", "--output", required=True)

    sp = command("render", cmd_render, "render a silhouette PGM")
    sp.add_argument("grid")
    sp.add_argument("--view", required=True, help="viewpoint JSON")
    camera_opt(sp)
    sp.add_argument("-o", "--output", required=True)

    sp = command("fit-shape", cmd_fit_shape, "fit a shape to silhouettes with known viewpoints")
    sp.add_argument("--mean", required=True)
    sp.add_argument("--obs", nargs=2, action="append", required=True, metavar=("PGM", "VIEW_JSON"))
    fit_opts(sp)

    sp = command("fit-pose", cmd_fit_pose, "estimate the viewpoint of one silhouette")
    sp.add_argument("--shape", required=True)
    sp.add_argument("--silhouette", required=True)
    camera_opt(sp)
    sp.add_argument("--config")
    sp.add_argument("-o", "--output", required=True, help="viewpoint JSON")
    sp.add_argument("--report")

    sp = command("fit-joint", cmd_fit_joint, "fit shape and viewpoints from silhouettes alone")
    sp.add_argument("--mean", required=True)
    sp.add_argument("--silhouette", action="append", required=True)
    fit_opts(sp)

    sp = command("eval-iou", cmd_eval_iou, "voxel IoU of predictions against ground truth")
    sp.add_argument("--pair", nargs=2, action="append", required=True, metavar=("PRED", "TRUTH"))
    sp.add_argument("--threshold", default="0.5", help="binarization threshold or 'auto'")

    sp = command("eval-pose", cmd_eval_pose, "median angular error and Acc_pi/6")
    sp.add_argument("pairs", help='JSON list of {"predicted": view, "truth": view}')

    sp = command("eval-hausdorff", cmd_eval_hausdorff, "symmetric Hausdorff distance of two clouds")
    sp.add_argument("a", help=".xyz or .vox32")
    sp.add_argument("b", help=".xyz or .vox32")
    sp.add_argument("--mode", choices=HAUSDORFF_MODES, default="paper-averaged")
    sp.add_argument("--scale", type=float, default=1.0, help="units per object cube for .vox32 inputs")
    sp.add_argument("--unit", default="object")

    sp = command("mesh", cmd_mesh, "marching-cubes mesh export (.obj)")
    sp.add_argument("grid")
    sp.add_argument("--isolevel", type=float, default=0.5)
    sp.add_argument("-o", "--output", required=True)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        args.seed = getattr(args, "seed", None)
        args.verbose = getattr(args, "verbose", False)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"silhouette3d: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"silhouette3d: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
