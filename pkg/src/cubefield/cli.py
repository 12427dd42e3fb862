"""Command line: projection utilities, scene fitting, rendering, evaluation.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError, UsageError
from .field import load_field, make_depth_planes, save_field
from .geometry import FACES, cubemap_to_erp, erp_to_cubemap
from .io import (
    load_depth,
    load_image,
    load_panorama,
    load_scene,
    load_trajectory,
    save_depth,
    save_image,
)
from .losses import LossWeights
from .metrics import DepthEvalConfig, depth_metrics, metrics_report
from .optimizer import FitConfig, PosedView, extract_depth, fit, loss_trace_csv
from .rendering import Pose, render_novel_cubemap, render_novel_panorama


class _Parser(argparse.ArgumentParser):
    # argparse would sys.exit(2); usage problems must exit 1 instead
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def _pose_from_args(args) -> Pose:
    return Pose.from_quaternion(np.asarray(args.rotation), np.asarray(args.translation))


def _add_pose_flags(p):
    p.add_argument("--rotation", type=float, nargs=4, default=[1.0, 0.0, 0.0, 0.0],
                   metavar=("QW", "QX", "QY", "QZ"), help="camera rotation, unit quaternion")
    p.add_argument("--translation", type=float, nargs=3, default=[0.0, 0.0, 0.0],
                   metavar=("TX", "TY", "TZ"), help="pose translation in meters")


def _add_size_flags(p):
    p.add_argument("--height", type=int, default=None, help="output panorama height")
    p.add_argument("--width", type=int, default=None, help="output panorama width")


def _out_hw(args, w: int) -> tuple:
    h = args.height if args.height else 2 * w
    ww = args.width if args.width else 2 * h
    return h, ww


def cmd_e2c(args) -> int:
    pano = load_panorama(args.input)
    faces = erp_to_cubemap(pano, args.face_size)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for i, name in enumerate(FACES):
        save_image(out / f"face_{name}.png", faces[i])
    print(f"wrote 6 faces ({args.face_size}x{args.face_size}) to {out}")
    return 0


def cmd_c2e(args) -> int:
    src = Path(args.input)
    faces = []
    for name in FACES:
        fp = src / f"face_{name}.png"
        if not fp.is_file():
            raise DataError(f"missing cube face {fp}")
        faces.append(load_image(fp))
    faces = np.stack(faces)
    if faces.shape[1] != faces.shape[2]:
        raise DataError("cube faces must be square")
    h = args.height if args.height else 2 * faces.shape[1]
    w = args.width if args.width else 2 * h
    save_image(args.output, cubemap_to_erp(faces, h, w))
    print(f"wrote {w}x{h} panorama to {args.output}")
    return 0


def cmd_fit(args) -> int:
    manifest = load_scene(args.scene)
    w = args.face_size or manifest.face_size
    d = args.planes or manifest.planes
    near = args.near if args.near is not None else manifest.near
    far = args.far if args.far is not None else manifest.far
    seed = args.seed if args.seed is not None else manifest.seed
    planes = make_depth_planes(near, far, d)
    views = [PosedView(pano=load_panorama(manifest.reference), pose=Pose.identity())]
    for v in manifest.views:
        views.append(PosedView(pano=load_panorama(v.image), pose=v.pose()))
    cfg = FitConfig(
        iterations=args.iterations,
        coarse_iterations=args.coarse_iterations,
        step_size=args.step_size,
        decay=args.decay,
        seed=seed,
        weights=LossWeights(
            lambda_l1=args.lambda_l1, lambda_ssim=args.lambda_ssim, lambda_edge=args.lambda_edge
        ),
        sampling=args.sampling,
        optimize_blending=args.optimize_blending,
    )
    result = fit(views, cfg, planes, w)
    out = Path(args.output)
    save_field(result.field, out)
    (out / "loss_trace.csv").write_text(loss_trace_csv(result.trace))
    first, last = result.trace[0][4], result.trace[-1][4]
    total = cfg.coarse_iterations + cfg.iterations
    print(f"fit {len(views)} views, {total} iterations: loss {first:.4f} -> {last:.4f}")
    print(f"field written to {out}")
    return 0


def cmd_render(args) -> int:
    field = load_field(args.field)
    pose = _pose_from_args(args)
    if args.cubemap:
        out_dir = Path(args.output)
        out_dir.mkdir(parents=True, exist_ok=True)
        result, valid = render_novel_cubemap(field, pose)
        for i, name in enumerate(FACES):
            save_image(out_dir / f"face_{name}.png", result.image[i] * valid[i][..., None])
        if args.depth:
            ddir = Path(args.depth)
            ddir.mkdir(parents=True, exist_ok=True)
            for i, name in enumerate(FACES):
                save_depth(ddir / f"face_{name}.pfm", result.depth[i])
        print(f"wrote 6 faces to {out_dir}")
    else:
        h, ww = _out_hw(args, field.w)
        result = render_novel_panorama(field, pose, (h, ww))
        save_image(args.output, result.image)
        if args.depth:
            save_depth(args.depth, result.depth)
        print(f"wrote {ww}x{h} panorama to {args.output}")
    return 0


def cmd_path(args) -> int:
    field = load_field(args.field)
    poses = load_trajectory(args.trajectory, interpolate=args.interpolate)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    h, ww = _out_hw(args, field.w)
    for idx, pose in enumerate(poses):
        result = render_novel_panorama(field, pose, (h, ww))
        save_image(out / f"frame_{idx:04d}.png", result.image)
        if args.depth:
            save_depth(out / f"frame_{idx:04d}.pfm", result.depth)
    print(f"wrote {len(poses)} frames to {out}")
    return 0


def cmd_depth(args) -> int:
    field = load_field(args.field)
    ext = extract_depth(field, args.as_)
    if ext.empty:
        print("warning: field is empty (nothing intersects the rays)", file=sys.stderr)
    if args.as_ == "panorama":
        save_depth(args.output, ext.depth)
        print(f"wrote panorama depth to {args.output}")
    else:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        for i, name in enumerate(FACES):
            save_depth(out / f"face_{name}.pfm", ext.depth[i])
        print(f"wrote 6 face depth maps to {out}")
    return 0


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    if not pred_dir.is_dir():
        raise UsageError(f"no prediction directory {pred_dir}")
    if not gt_dir.is_dir():
        raise UsageError(f"no ground-truth directory {gt_dir}")
    cfg = DepthEvalConfig(
        min_depth=args.min_depth, max_depth=args.max_depth, median_scaling=args.median_scaling
    )
    exts = (".pfm", ".png")
    preds = {p.stem: p for p in sorted(pred_dir.iterdir()) if p.suffix.lower() in exts}
    rows = []
    for stem, pp in preds.items():
        for ext in exts:
            gp = gt_dir / (stem + ext)
            if gp.is_file():
                rows.append((stem, depth_metrics(load_depth(pp), load_depth(gp), cfg)))
                break
    if not rows:
        raise DataError("no prediction/ground-truth pairs matched by file stem")
    text, csv = metrics_report(rows)
    Path(args.output).write_text(csv)
    print(text, end="")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(load_field(args.field_dir))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="cubefield", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("e2c", help="panorama to cube faces")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="output directory for face_*.png")
    p.add_argument("--face-size", type=int, default=256)
    p.set_defaults(func=cmd_e2c)

    p = sub.add_parser("c2e", help="cube faces to panorama")
    p.add_argument("--input", required=True, help="directory holding face_*.png")
    p.add_argument("--output", required=True)
    _add_size_flags(p)
    p.set_defaults(func=cmd_c2e)

    p = sub.add_parser("fit", help="fit a cubic field to a scene manifest")
    p.add_argument("--scene", required=True)
    p.add_argument("--output", required=True, help="output field directory")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--coarse-iterations", type=int, default=0,
                   help="warm-up iterations at half face width before the full-width fit")
    p.add_argument("--step-size", type=float, default=0.1)
    p.add_argument("--decay", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None, help="override the manifest seed")
    p.add_argument("--planes", type=int, default=None, help="override plane count")
    p.add_argument("--face-size", type=int, default=None, help="override face width")
    p.add_argument("--near", type=float, default=None)
    p.add_argument("--far", type=float, default=None)
    p.add_argument("--sampling", choices=["planar", "raycube", "both"], default="both")
    p.add_argument("--lambda-l1", type=float, default=1.0)
    p.add_argument("--lambda-ssim", type=float, default=1.0)
    p.add_argument("--lambda-edge", type=float, default=0.1)
    p.add_argument("--optimize-blending", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("render", help="render a fitted field from a pose")
    p.add_argument("--field", required=True, help="field directory")
    p.add_argument("--output", required=True, help="PNG path (or directory with --cubemap)")
    _add_pose_flags(p)
    _add_size_flags(p)
    p.add_argument("--cubemap", action="store_true", help="write six faces instead of a panorama")
    p.add_argument("--depth", default=None, help="also write depth (path, or directory with --cubemap)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("path", help="render frames along a trajectory file")
    p.add_argument("--field", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--output", required=True, help="output frame directory")
    p.add_argument("--interpolate", type=int, default=0, help="poses inserted between waypoints")
    _add_size_flags(p)
    p.add_argument("--depth", action="store_true", help="also write frame_*.pfm depth")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("depth", help="extract composited depth from a field")
    p.add_argument("--field", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--as", dest="as_", choices=["cubemap", "panorama"], default="panorama")
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("eval", help="compare predicted vs ground-truth depth directories")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--output", required=True, help="metrics CSV path")
    p.add_argument("--min-depth", type=float, default=0.3)
    p.add_argument("--max-depth", type=float, default=10.0)
    p.add_argument("--median-scaling", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="start the HTTP frame service")
    p.add_argument("--field-dir", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError(parser.format_usage())
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        # invalid values reaching library contracts are data problems
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
