"""Parametric box-world parking lot and its exact BEV ground truth.

A scene is a flat ground plane plus axis-aligned boxes (parked cars,
buses, EV chargers, and boundary containers) in a world frame; the ego
car moves through it. BEV ground truth is a pure function of the box
list and the ego pose: segmentation takes the class of the tallest box
over each cell center, the height class discretizes that box's height
against the car-level band, and cells under the ego body are car /
at-car-level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..bev_geometry import BevGrid
from ..classes import (
    DEFAULT_CAR_BAND,
    HEIGHT_ABOVE,
    HEIGHT_AT,
    HEIGHT_BELOW,
    SEG_BUS,
    SEG_CAR,
    SEG_CHARGER,
    SEG_GROUND,
    SEG_NON_DRIVEABLE,
)

_CLASS_IDS = {
    "car": SEG_CAR,
    "bus": SEG_BUS,
    "ev_charger": SEG_CHARGER,
    "non_driveable": SEG_NON_DRIVEABLE,
}


class PlacementFailure(RuntimeError):
    """Rejection sampling could not place all requested boxes."""


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    sx: float
    sy: float
    height: float
    cls: str

    def contains_xy(self, px, py):
        return (np.abs(px - self.cx) <= self.sx / 2.0) & (np.abs(py - self.cy) <= self.sy / 2.0)

    def overlaps(self, other: "Box") -> bool:
        return (abs(self.cx - other.cx) < (self.sx + other.sx) / 2.0
                and abs(self.cy - other.cy) < (self.sy + other.sy) / 2.0)

    @property
    def class_id(self) -> int:
        return _CLASS_IDS[self.cls]


@dataclass(frozen=True)
class SceneConfig:
    extent: float = 30.0            # square lot side, meters, centered at origin
    n_cars: int = 10
    n_buses: int = 2
    n_chargers: int = 3
    containers_per_side: int = 3
    car_band: tuple[float, float] = DEFAULT_CAR_BAND
    ego_dims: tuple[float, float, float] = (4.2, 1.9, 1.5)  # length, width, height
    # per-class (size_x range, size_y range, height range)
    car_size: tuple = ((3.8, 4.6), (1.7, 2.0), (1.3, 1.6))
    bus_size: tuple = ((8.0, 10.0), (2.3, 2.6), (2.8, 3.3))
    charger_size: tuple = ((0.6, 0.9), (0.6, 0.9), (1.0, 1.6))
    container_size: tuple = ((3.0, 6.0), (1.5, 2.5), (2.0, 4.0))


@dataclass(frozen=True)
class Scene:
    extent: float
    boxes: tuple[Box, ...]
    ego_start: tuple[float, float, float]       # x, y, yaw
    ego_dims: tuple[float, float, float]
    car_band: tuple[float, float] = DEFAULT_CAR_BAND

    def ego_box_at(self, x: float, y: float, margin: float = 0.0) -> Box:
        # axis-aligned bound of the ego footprint, conservative under yaw
        diag = float(np.hypot(self.ego_dims[0], self.ego_dims[1]))
        return Box(x, y, diag + margin, diag + margin, self.ego_dims[2], "car")


def _sample_box(rng: np.random.Generator, cls: str, size_spec, extent: float) -> Box:
    (sx_lo, sx_hi), (sy_lo, sy_hi), (h_lo, h_hi) = size_spec
    sx = rng.uniform(sx_lo, sx_hi)
    sy = rng.uniform(sy_lo, sy_hi)
    if rng.random() < 0.5:  # half the boxes are rotated 90 degrees
        sx, sy = sy, sx
    half = extent / 2.0 - max(sx, sy) / 2.0 - 0.5
    return Box(
        cx=rng.uniform(-half, half),
        cy=rng.uniform(-half, half),
        sx=sx,
        sy=sy,
        height=rng.uniform(h_lo, h_hi),
        cls=cls,
    )


def build_scene(seed: int, config: SceneConfig | None = None) -> Scene:
    """Deterministically sample a non-overlapping lot layout for a seed."""
    cfg = config or SceneConfig()
    rng = np.random.default_rng(seed)

    boxes: list[Box] = []
    half = cfg.extent / 2.0

    # boundary containers ring the lot, kept clear of the corners so
    # perpendicular sides never collide
    (_, l_hi), (_, w_hi), _ = cfg.container_size
    corner_clear = w_hi + 0.5
    span = cfg.extent - 2.0 * corner_clear
    slot = span / cfg.containers_per_side
    for side in range(4):
        for j in range(cfg.containers_per_side):
            (l_lo, _), (w_lo, _), (h_lo, h_hi) = cfg.container_size
            length = rng.uniform(l_lo, min(l_hi, slot - 0.3))
            width = rng.uniform(w_lo, w_hi)
            height = rng.uniform(h_lo, h_hi)
            along = -span / 2.0 + (j + 0.5) * slot
            offset = half - width / 2.0
            if side == 0:
                box = Box(along, offset, length, width, height, "non_driveable")
            elif side == 1:
                box = Box(along, -offset, length, width, height, "non_driveable")
            elif side == 2:
                box = Box(offset, along, width, length, height, "non_driveable")
            else:
                box = Box(-offset, along, width, length, height, "non_driveable")
            boxes.append(box)

    ego_start = (0.0, 0.0, 0.0)
    ego_guard = Box(ego_start[0], ego_start[1],
                    cfg.ego_dims[0] + 2.0, cfg.ego_dims[1] + 2.0,
                    cfg.ego_dims[2], "car")

    wanted = ([("car", cfg.car_size)] * cfg.n_cars
              + [("bus", cfg.bus_size)] * cfg.n_buses
              + [("ev_charger", cfg.charger_size)] * cfg.n_chargers)
    rejections = 0
    for cls, size_spec in wanted:
        while True:
            cand = _sample_box(rng, cls, size_spec, cfg.extent)
            if cand.overlaps(ego_guard) or any(cand.overlaps(b) for b in boxes):
                rejections += 1
                if rejections > 10_000:
                    raise PlacementFailure(
                        f"gave up after {rejections} rejected placements")
                continue
            boxes.append(cand)
            break

    return Scene(
        extent=cfg.extent,
        boxes=tuple(boxes),
        ego_start=ego_start,
        ego_dims=cfg.ego_dims,
        car_band=cfg.car_band,
    )


def ground_truth_bev(scene: Scene, grid: BevGrid, ego_rotation: np.ndarray,
                     ego_translation: np.ndarray):
    """Exact BEV maps for one ego pose: (segmentation, height), both
    [h, w] uint8 with rows indexed by grid y.

    Cell centers are point-sampled (no area voting) so the maps are
    exactly recomputable. Occlusion is deliberately ignored: this is
    top-down truth.
    """
    R = np.asarray(ego_rotation, dtype=np.float64)
    t = np.asarray(ego_translation, dtype=np.float64)
    centers = grid.cell_centers()  # ego frame, [P, 2]
    world = centers @ R[:2, :2].T + t[:2]
    px, py = world[:, 0], world[:, 1]

    best_height = np.zeros(grid.n_cells)
    best_class = np.full(grid.n_cells, SEG_GROUND, dtype=np.uint8)
    for box in scene.boxes:
        inside = box.contains_xy(px, py)
        taller = inside & (box.height > best_height)
        best_height[taller] = box.height
        best_class[taller] = box.class_id

    z_lo, z_hi = scene.car_band
    height_cls = np.full(grid.n_cells, HEIGHT_BELOW, dtype=np.uint8)
    height_cls[best_height >= z_lo] = HEIGHT_AT
    height_cls[best_height > z_hi] = HEIGHT_ABOVE

    # ego body: car class, at car level
    ex, ey = centers[:, 0], centers[:, 1]
    under_ego = (np.abs(ex) <= scene.ego_dims[0] / 2.0) & (np.abs(ey) <= scene.ego_dims[1] / 2.0)
    best_class[under_ego] = SEG_CAR
    height_cls[under_ego] = HEIGHT_AT

    seg = best_class.reshape(grid.h, grid.w)
    height = height_cls.reshape(grid.h, grid.w)
    return seg, height
