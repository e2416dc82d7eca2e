"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation. Every command is deterministic given its flags and seed (modulo
wall-time fields in reports).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import errors
from .config import TrainConfig, load_config
from .io_formats import (CurveLog, read_cameras, read_curve, read_ply,
                         write_cameras, write_ply, write_png, read_png)
from .losses import MetricsReport
from .rasterizer import render_naive, render_tiled
from .reports import write_curves_png, write_curves_svg
from .trainer import ViewData, evaluate, make_synthetic_scene, train

USAGE_EXIT = 1
DATA_EXIT = 2
INTERNAL_EXIT = 3

_DATA_ERRORS = (errors.DogsplatError, FileNotFoundError, IsADirectoryError,
                PermissionError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(USAGE_EXIT)


def _build_parser():
    parser = _Parser(prog="dogsplat",
                     description="CPU Gaussian splatting with pruning and "
                                 "difference-of-Gaussians primitives")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="emit a synthetic ground-truth dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gaussians", type=int, default=100)
    p.add_argument("--views", type=int, default=8)
    p.add_argument("--res", type=int, default=64)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="fit, prune and refine a model")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=("v1", "v2", "v3", "full"), default=None)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    p = sub.add_parser("render", help="render a checkpoint for a camera list")
    p.add_argument("--model", required=True)
    p.add_argument("--cameras", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rasterizer", choices=("naive", "tiled"), default="tiled")

    p = sub.add_parser("eval", help="print metrics of a checkpoint on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("curves", help="plot a curve log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True, help="SVG path")
    p.add_argument("--png", default=None, help="optional matplotlib PNG path")
    return parser


def _load_dataset(data_dir):
    entries = read_cameras(os.path.join(data_dir, "cameras.txt"))
    return [ViewData(cam, read_png(os.path.join(data_dir, name)), name)
            for name, cam in entries]


def _cmd_synth(args):
    if args.gaussians < 1:
        raise errors.RangeError("--gaussians must be >= 1")
    if args.views < 1:
        raise errors.RangeError("--views must be >= 1")
    if args.res < 8:
        raise errors.RangeError("--res must be >= 8")
    os.makedirs(args.out, exist_ok=True)
    scene, dataset = make_synthetic_scene(args.seed, args.gaussians,
                                          args.views, args.res)
    write_ply(scene, os.path.join(args.out, "gt.ply"))
    write_cameras(os.path.join(args.out, "cameras.txt"),
                  [(v.name, v.camera) for v in dataset])
    for view in dataset:
        write_png(os.path.join(args.out, view.name), view.image)
    print(f"wrote {len(dataset)} views to {args.out}")
    return 0


def _cmd_train(args):
    config = load_config(args.config) if args.config else TrainConfig()
    if args.variant is not None:
        config.variant = args.variant  # CLI wins over the config file
    config.validate()
    dataset = _load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)
    with CurveLog(os.path.join(args.out, "curve.csv")) as log:
        result = train(config, dataset, log=log, threads=args.threads)
    write_ply(result.scene, os.path.join(args.out, "model.ply"))
    report = evaluate(result.scene, [v.camera for v in dataset],
                      [v.image for v in dataset],
                      np.full(3, config.background))
    report.wall_time_s = result.wall_time_s
    with open(os.path.join(args.out, "metrics.txt"), "w", encoding="utf-8") as fh:
        fh.write(str(report) + "\n")
    write_curves_png(os.path.join(args.out, "curves.png"), result.rows)
    print(str(report))
    finished = any(r.event == "finish" for r in result.rows)
    return 0 if finished else INTERNAL_EXIT


def _cmd_render(args):
    scene = read_ply(args.model)
    entries = read_cameras(args.cameras)
    os.makedirs(args.out, exist_ok=True)
    render = render_naive if args.rasterizer == "naive" else render_tiled
    for name, cam in entries:
        result = render(scene, cam)
        write_png(os.path.join(args.out, name), result.clamped)
    print(f"rendered {len(entries)} views to {args.out}")
    return 0


def _cmd_eval(args):
    scene = read_ply(args.model)
    dataset = _load_dataset(args.data)
    report = evaluate(scene, [v.camera for v in dataset],
                      [v.image for v in dataset])
    print(str(report))
    return 0


def _cmd_curves(args):
    rows = read_curve(args.log)
    write_curves_svg(args.out, rows)
    if args.png:
        write_curves_png(args.png, rows)
    print(f"plotted {len(rows)} rows to {args.out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "render": _cmd_render,
    "eval": _cmd_eval,
    "curves": _cmd_curves,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_EXIT
    try:
        return _COMMANDS[args.command](args)
    except _DATA_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return DATA_EXIT
    except Exception as exc:  # pragma: no cover - internal invariant trips
        sys.stderr.write(f"internal error: {exc!r}\n")
        return INTERNAL_EXIT


if __name__ == "__main__":
    sys.exit(main())
