"""Command-line interface.

Subcommands: render, calib-check, refpoints, train, eval, infer,
gradcheck. All flags are long-form; F2BEV_THREADS caps worker threads
used by the renderer.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("F2BEV_THREADS", "4")))
    except ValueError:
        return 4


def _add_grid_args(p):
    p.add_argument("--grid", type=int, default=50, help="grid cells per side")
    p.add_argument("--cell", type=float, default=0.33, help="cell side in meters")
    p.add_argument("--anchors", type=str, default="0,0.25,1.8",
                   help="comma-separated height anchors in meters")


def _parse_anchors(text: str) -> tuple[float, ...]:
    return tuple(float(a) for a in text.split(","))


def _cmd_render(args) -> int:
    from .bev_geometry import BevGrid
    from .synth import generate_sequence, make_default_rig, write_sequence
    from .synth.scene import SceneConfig

    grid = BevGrid(h=args.grid, w=args.grid, l=args.cell,
                   anchors=_parse_anchors(args.anchors))
    cameras = make_default_rig(image_size=args.image_size)
    cfg = SceneConfig(extent=args.extent, n_cars=args.cars, n_buses=args.buses,
                      n_chargers=args.chargers)
    for s in range(args.sequences):
        seed = args.seed + s
        records = generate_sequence(seed, args.frames, args.speed, args.dt,
                                    grid, cameras, cfg)
        seq_dir = write_sequence(args.out, s, records, cameras, grid, seed,
                                 car_band=cfg.car_band)
        print(f"wrote {len(records)} frames to {seq_dir}")
    return 0


def _cmd_calib_check(args) -> int:
    from .camera import load_calibration, project_array, unproject_array

    cam = load_calibration(args.calib)
    rng = np.random.default_rng(args.seed)

    n = args.samples
    rays = rng.standard_normal((4 * n, 3))
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    rays = rays[rays[:, 2] + cam.xi > 0.05][:n]
    world = rays * rng.uniform(0.5, 30.0, (len(rays), 1))
    pts = world @ np.linalg.inv(cam.rotation).T - (np.linalg.inv(cam.rotation) @ cam.translation)
    u, v, ok, _ = project_array(cam, pts)
    back, pre = unproject_array(cam, u[ok], v[ok])
    dots = np.sum(back * rays[ok], axis=1)

    u2, v2, ok2, _ = project_array(
        cam, (back * 5.0) @ np.linalg.inv(cam.rotation).T
        - (np.linalg.inv(cam.rotation) @ cam.translation))
    px_err = np.max(np.hypot(u2 - u[ok], v2 - v[ok])) if ok.any() else float("nan")

    print(f"camera {args.calib}: {ok.sum()} / {len(rays)} rays project valid")
    print(f"max ray round-trip deviation: {np.max(1.0 - dots):.3e}")
    print(f"max pixel round-trip error:   {px_err:.3e} px")
    return 0


def _cmd_refpoints(args) -> int:
    from .bev_geometry import BevGrid, build_reference_table
    from .camera import load_calibration

    calib_dir = args.calib_dir
    names = sorted(n for n in os.listdir(calib_dir)
                   if n.startswith("cam") and n.endswith(".txt"))
    cameras = [load_calibration(os.path.join(calib_dir, n)) for n in names]
    grid = BevGrid(h=args.grid, w=args.grid, l=args.cell,
                   anchors=_parse_anchors(args.anchors))
    table = build_reference_table(grid, cameras)

    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell_x", "cell_y", "anchor_index", "camera_index",
                         "u", "v", "valid"])
        for p in range(grid.n_cells):
            cx, cy = p % grid.w, p // grid.w
            for j in range(grid.n_anchors):
                for i in range(len(cameras)):
                    u, v = table.uv[p, j, i]
                    writer.writerow([cx, cy, j, i, f"{u:.6f}", f"{v:.6f}",
                                     int(table.valid[p, j, i])])
    print(f"wrote {grid.n_cells * grid.n_anchors * len(cameras)} rows to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .model import ModelConfig
    from .pipeline import TrainConfig, train
    from .synth.dataset import load_dataset

    sequences = load_dataset(args.data)
    grid = sequences[0].grid
    model_cfg = ModelConfig(
        d=args.d, n_blocks=args.blocks, ffn_hidden=args.ffn_hidden,
        n_heads=args.heads, n_points=args.points,
        grid_h=grid.h, grid_w=grid.w, cell=grid.l, anchors=grid.anchors,
        head=args.head, task=args.task,
    )
    cfg = TrainConfig(task=args.task, head=args.head, steps=args.steps,
                      lr=args.lr, momentum=args.momentum, seed=args.seed,
                      ce_fraction=args.ce_fraction, gamma=args.gamma,
                      ckpt_every=args.ckpt_every,
                      history_dropout=args.history_dropout)
    paths = train(args.data, cfg, model_cfg, args.out)
    for key, path in paths.items():
        print(f"{key}: {path}")
    return 0


def _cmd_eval(args) -> int:
    from .pipeline import evaluate

    results = evaluate(args.data, args.checkpoint, args.model_config,
                       split=args.split, out_dir=args.out,
                       with_history=not args.ablate_history)
    for task, reports in results.items():
        rep = reports["overall"]
        print(f"{task}: mean IoU {rep.mean_iou:.4f}, "
              f"freq-weighted IoU {rep.freq_weighted_iou:.4f}")
    return 0


def _cmd_infer(args) -> int:
    from .pipeline import infer_sequence

    written = infer_sequence(args.data, args.checkpoint, args.model_config,
                             args.out, split=args.split,
                             with_history=not args.ablate_history)
    print(f"wrote {len(written)} files under {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .verification import run_gradient_suite, suite_passed

    precisions = ("single", "double") if args.precision == "both" else (args.precision,)
    ok = True
    for prec in precisions:
        results = run_gradient_suite(prec)
        print(f"-- {prec} precision --")
        for r in results:
            print(r.line())
        ok = ok and suite_passed(results)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fisheye-bev",
        description="Surround-view fisheye images to BEV height and "
                    "segmentation maps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--sequences", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--image-size", type=int, default=128)
    p.add_argument("--speed", type=float, default=0.35, help="ego speed m/s")
    p.add_argument("--dt", type=float, default=0.5, help="frame period s")
    p.add_argument("--extent", type=float, default=30.0)
    p.add_argument("--cars", type=int, default=10)
    p.add_argument("--buses", type=int, default=2)
    p.add_argument("--chargers", type=int, default=3)
    _add_grid_args(p)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("calib-check", help="projection round-trip report")
    p.add_argument("--calib", required=True)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_calib_check)

    p = sub.add_parser("refpoints", help="dump the reference-point table as CSV")
    p.add_argument("--calib-dir", required=True,
                   help="directory holding cam<i>.txt calibrations")
    p.add_argument("--out", required=True)
    _add_grid_args(p)
    p.set_defaults(func=_cmd_refpoints)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--task", choices=("height", "segmentation", "multitask"),
                   default="segmentation")
    p.add_argument("--head", choices=("attn", "conv"), default="conv")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ce-fraction", type=float, default=0.6,
                   help="fraction of steps on cross-entropy before focal")
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--blocks", type=int, default=3)
    p.add_argument("--ffn-hidden", type=int, default=0)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--points", type=int, default=4)
    p.add_argument("--ckpt-every", type=int, default=0)
    p.add_argument("--history-dropout", type=float, default=0.25)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint, write IoU CSVs")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--model-config", required=True)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--out", default=None)
    p.add_argument("--ablate-history", action="store_true",
                   help="reset BEV state every frame")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("infer", help="write predicted BEV maps and collages")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--model-config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="all")
    p.add_argument("--ablate-history", action="store_true")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("gradcheck", help="run the gradient verification suite")
    p.add_argument("--precision", choices=("single", "double", "both"),
                   default="double")
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
