"""On-disk dataset layout.

    <root>/seq_<id>/calib/cam<i>.txt (+ cam<i>_mask.pgm)
    <root>/seq_<id>/meta.txt
    <root>/seq_<id>/frame_<05d>/cam<i>.ppm        pseudo-RGB render
                                cam<i>_seg.pgm    per-pixel semantic class
                                bev_seg.pgm       BEV segmentation classes
                                bev_height.pgm    BEV height classes
                                ego.txt           9 rotation + 3 translation
                                                  floats (absolute pose)
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..bev_geometry import BevGrid
from ..camera import FisheyeCamera, load_calibration, save_calibration
from ..classes import DEFAULT_CAR_BAND
from ..netpbm import read_pgm, read_ppm, write_pgm, write_ppm
from .sequence import FrameRecord

N_CAMERAS = 4


@dataclass
class SequenceData:
    seq_id: int
    path: str
    cameras: list[FisheyeCamera]
    grid: BevGrid
    seed: int
    car_band: tuple[float, float]
    frames: list[FrameRecord]


def write_sequence(root, seq_id: int, records: list[FrameRecord],
                   cameras: list[FisheyeCamera], grid: BevGrid, seed: int,
                   car_band: tuple[float, float] = DEFAULT_CAR_BAND) -> str:
    seq_dir = os.path.join(os.fspath(root), f"seq_{seq_id:03d}")
    calib_dir = os.path.join(seq_dir, "calib")
    os.makedirs(calib_dir, exist_ok=True)

    for i, cam in enumerate(cameras):
        save_calibration(os.path.join(calib_dir, f"cam{i}.txt"), cam,
                         mask_name=f"cam{i}_mask.pgm")

    anchors = ",".join(repr(a) for a in grid.anchors)
    with open(os.path.join(seq_dir, "meta.txt"), "w") as fh:
        fh.write(f"seed = {seed}\n")
        fh.write(f"frames = {len(records)}\n")
        fh.write(f"grid_h = {grid.h}\n")
        fh.write(f"grid_w = {grid.w}\n")
        fh.write(f"cell = {grid.l!r}\n")
        fh.write(f"anchors = {anchors}\n")
        fh.write(f"band = {car_band[0]!r},{car_band[1]!r}\n")

    for rec in records:
        frame_dir = os.path.join(seq_dir, f"frame_{rec.index:05d}")
        os.makedirs(frame_dir, exist_ok=True)
        for i in range(len(cameras)):
            write_ppm(os.path.join(frame_dir, f"cam{i}.ppm"), rec.images[i])
            write_pgm(os.path.join(frame_dir, f"cam{i}_seg.pgm"), rec.sem_images[i])
        write_pgm(os.path.join(frame_dir, "bev_seg.pgm"), rec.bev_seg)
        write_pgm(os.path.join(frame_dir, "bev_height.pgm"), rec.bev_height)
        with open(os.path.join(frame_dir, "ego.txt"), "w") as fh:
            fh.write(" ".join(repr(x) for x in rec.ego_rotation.ravel()) + "\n")
            fh.write(" ".join(repr(x) for x in rec.ego_translation) + "\n")
    return seq_dir


def _parse_meta(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line and "=" in line:
                key, value = (p.strip() for p in line.split("=", 1))
                out[key] = value
    return out


def load_sequence(seq_dir) -> SequenceData:
    seq_dir = os.fspath(seq_dir)
    meta = _parse_meta(os.path.join(seq_dir, "meta.txt"))
    grid = BevGrid(
        h=int(meta["grid_h"]),
        w=int(meta["grid_w"]),
        l=float(meta["cell"]),
        anchors=tuple(float(a) for a in meta["anchors"].split(",")),
    )
    band = tuple(float(b) for b in meta.get("band", "0.25,1.8").split(","))

    calib_dir = os.path.join(seq_dir, "calib")
    cameras = []
    for i in range(N_CAMERAS):
        cameras.append(load_calibration(os.path.join(calib_dir, f"cam{i}.txt")))

    frames = []
    n_frames = int(meta["frames"])
    for k in range(n_frames):
        frame_dir = os.path.join(seq_dir, f"frame_{k:05d}")
        nums = np.array(open(os.path.join(frame_dir, "ego.txt")).read().split(),
                        dtype=np.float64)
        if nums.size != 12:
            raise ValueError(f"ego.txt in {frame_dir} must hold 12 floats")
        frames.append(FrameRecord(
            index=k,
            ego_rotation=nums[:9].reshape(3, 3),
            ego_translation=nums[9:],
            images=[read_ppm(os.path.join(frame_dir, f"cam{i}.ppm"))
                    for i in range(N_CAMERAS)],
            sem_images=[read_pgm(os.path.join(frame_dir, f"cam{i}_seg.pgm"))
                        for i in range(N_CAMERAS)],
            bev_seg=read_pgm(os.path.join(frame_dir, "bev_seg.pgm")),
            bev_height=read_pgm(os.path.join(frame_dir, "bev_height.pgm")),
        ))

    seq_id = int(os.path.basename(seq_dir).split("_")[1])
    return SequenceData(seq_id=seq_id, path=seq_dir, cameras=cameras, grid=grid,
                        seed=int(meta["seed"]), car_band=(band[0], band[1]),
                        frames=frames)


def load_dataset(root) -> list[SequenceData]:
    root = os.fspath(root)
    seq_dirs = sorted(
        os.path.join(root, name) for name in os.listdir(root)
        if name.startswith("seq_") and os.path.isdir(os.path.join(root, name))
    )
    if not seq_dirs:
        raise FileNotFoundError(f"no seq_* directories under {root}")
    return [load_sequence(d) for d in seq_dirs]
