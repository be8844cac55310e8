"""Seeded ego-motion sequences: piecewise paths rendered frame by frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bev_geometry import BevGrid
from ..camera import FisheyeCamera
from .render import render_view
from .scene import Scene, SceneConfig, build_scene, ground_truth_bev

_TURN_CANDIDATES = (0.0, 15.0, -15.0, 30.0, -30.0, 45.0, -45.0,
                    60.0, -60.0, 90.0, -90.0, 120.0, -120.0, 180.0)


class PathFailure(RuntimeError):
    """No collision-free path found after the internal retry budget."""


@dataclass
class FrameRecord:
    """One timestep: the four renders, BEV truth, and the absolute pose."""

    index: int
    ego_rotation: np.ndarray       # 3x3, ego -> world
    ego_translation: np.ndarray    # 3-vector
    images: list                   # per camera, [H, W, 3] uint8
    sem_images: list               # per camera, [H, W] uint8
    bev_seg: np.ndarray            # [h, w] uint8
    bev_height: np.ndarray         # [h, w] uint8


def _yaw_rotation(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _pose_free(scene: Scene, x: float, y: float) -> bool:
    guard = scene.ego_box_at(x, y, margin=0.4)
    half = scene.extent / 2.0 - max(guard.sx, guard.sy) / 2.0
    if abs(x) > half or abs(y) > half:
        return False
    return not any(guard.overlaps(b) for b in scene.boxes)


def _plan_path(scene: Scene, rng: np.random.Generator, n_frames: int,
               speed: float, dt: float):
    """Greedy collision-avoiding walk; returns [(x, y, yaw)] per frame."""
    x, y, yaw = scene.ego_start
    poses = [(x, y, yaw)]
    step = speed * dt
    for _ in range(n_frames - 1):
        wander = np.radians(10.0) * rng.choice((-1.0, 0.0, 0.0, 1.0))
        moved = False
        for delta_deg in _TURN_CANDIDATES:
            cand_yaw = yaw + wander + np.radians(delta_deg)
            nx = x + step * np.cos(cand_yaw)
            ny = y + step * np.sin(cand_yaw)
            if _pose_free(scene, nx, ny):
                x, y, yaw = nx, ny, cand_yaw
                moved = True
                break
        if not moved:
            return None
        poses.append((x, y, yaw))
    return poses


def generate_sequence(seed: int, n_frames: int, speed: float, dt: float,
                      grid: BevGrid, cameras: list[FisheyeCamera],
                      config: SceneConfig | None = None) -> list[FrameRecord]:
    """Render a deterministic sequence of n_frames for a seed.

    The scene itself is build_scene(seed); only the path rng is reseeded
    (up to 10 attempts) when the greedy planner dead-ends.
    """
    if n_frames < 1:
        raise ValueError("need at least one frame")
    scene = build_scene(seed, config)
    poses = None
    for attempt in range(10):
        rng = np.random.default_rng([seed, attempt, 7])
        poses = _plan_path(scene, rng, n_frames, speed, dt)
        if poses is not None:
            break
    if poses is None:
        raise PathFailure(f"no path for seed {seed} after 10 attempts")

    records = []
    for idx, (x, y, yaw) in enumerate(poses):
        R = _yaw_rotation(yaw)
        t = np.array([x, y, 0.0])
        images, sems = [], []
        for cam in cameras:
            sem, rgb = render_view(scene, cam, R, t)
            images.append(rgb)
            sems.append(sem)
        seg, height = ground_truth_bev(scene, grid, R, t)
        records.append(FrameRecord(
            index=idx, ego_rotation=R, ego_translation=t,
            images=images, sem_images=sems, bev_seg=seg, bev_height=height,
        ))
    return records
