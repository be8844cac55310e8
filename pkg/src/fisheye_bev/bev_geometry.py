"""BEV query lattice, 3D reference points, and ego-motion alignment.

Grid convention: cell (x, y) has x indexing the width axis (w cells) and
y the height axis (h cells); flattened cell index p = y * w + x. The cell
maps to the ego-frame ground location

    x_r = (x - w/2) * l,    y_r = (y - h/2) * l,

so the ego sits at cell (w/2, h/2). Ego frame: x forward, y left, z up.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import FisheyeCamera, project_array


@dataclass(frozen=True)
class BevGrid:
    """Query lattice geometry: h x w cells of side l with height anchors."""

    h: int
    w: int
    l: float
    anchors: tuple[float, ...]
    d: int = 32

    def __post_init__(self):
        if self.h < 1 or self.w < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.l <= 0:
            raise ValueError("cell side must be positive")
        anchors = tuple(float(a) for a in self.anchors)
        if len(anchors) < 1:
            raise ValueError("need at least one height anchor")
        if any(b <= a for a, b in zip(anchors, anchors[1:])):
            raise ValueError("anchors must be strictly increasing")
        object.__setattr__(self, "anchors", anchors)

    @property
    def n_cells(self) -> int:
        return self.h * self.w

    @property
    def n_anchors(self) -> int:
        return len(self.anchors)

    def cell_centers(self) -> np.ndarray:
        """Ego-frame (x_r, y_r) of every cell, shape [h*w, 2], p = y*w + x."""
        xs = (np.arange(self.w) - self.w / 2.0) * self.l
        ys = (np.arange(self.h) - self.h / 2.0) * self.l
        gx, gy = np.meshgrid(xs, ys)  # rows follow y
        return np.stack([gx.ravel(), gy.ravel()], axis=-1)


def cell_to_world(grid: BevGrid, x: int, y: int) -> tuple[float, float]:
    """Ego-frame ground coordinates of cell (x, y)."""
    if not (0 <= x < grid.w and 0 <= y < grid.h):
        raise IndexError(f"cell ({x}, {y}) outside {grid.w}x{grid.h} grid")
    return (x - grid.w / 2.0) * grid.l, (y - grid.h / 2.0) * grid.l


def anchor_points(grid: BevGrid, x: int, y: int) -> np.ndarray:
    """The cell's 3D reference points, one per height anchor, shape [n_a, 3]."""
    x_r, y_r = cell_to_world(grid, x, y)
    return np.array([[x_r, y_r, z] for z in grid.anchors])


@dataclass(frozen=True)
class ReferencePointTable:
    """Precomputed projections of every (cell, anchor) into every camera.

    uv[p, j, i] is the pixel of anchor j of cell p in camera i (NaN when
    the point is behind the projection singularity); valid[p, j, i] marks
    usable projections; n_valid_views[p] = |set of cameras with at least
    one valid anchor for p|.
    """

    grid: BevGrid
    uv: np.ndarray          # [h*w, n_a, n_cam, 2] float64
    valid: np.ndarray       # [h*w, n_a, n_cam] bool
    n_valid_views: np.ndarray = field(init=False)  # [h*w] int

    def __post_init__(self):
        views = self.valid.any(axis=1).sum(axis=-1).astype(np.int64)
        object.__setattr__(self, "n_valid_views", views)

    @property
    def n_cameras(self) -> int:
        return self.uv.shape[2]

    def valid_views(self, p: int) -> set[int]:
        return set(np.nonzero(self.valid[p].any(axis=0))[0].tolist())


def build_reference_table(grid: BevGrid, cameras: list[FisheyeCamera]) -> ReferencePointTable:
    """Project every anchor of every cell through every camera.

    Static per rig: extrinsics and grid fully determine the table, so it is
    computed once and reused across frames.
    """
    if not cameras:
        raise ValueError("need at least one camera")
    centers = grid.cell_centers()  # [P, 2]
    n_a = grid.n_anchors
    pts = np.concatenate(
        [
            np.repeat(centers, n_a, axis=0),
            np.tile(np.asarray(grid.anchors)[:, None], (grid.n_cells, 1)),
        ],
        axis=1,
    )  # [P*n_a, 3] ordered (cell-major, anchor-minor)

    uv = np.empty((grid.n_cells, n_a, len(cameras), 2))
    valid = np.empty((grid.n_cells, n_a, len(cameras)), dtype=bool)
    for i, cam in enumerate(cameras):
        u, v, ok, _ = project_array(cam, pts)
        uv[:, :, i, 0] = u.reshape(grid.n_cells, n_a)
        uv[:, :, i, 1] = v.reshape(grid.n_cells, n_a)
        valid[:, :, i] = ok.reshape(grid.n_cells, n_a)
    return ReferencePointTable(grid=grid, uv=uv, valid=valid)


@dataclass(frozen=True)
class EgoMotion:
    """Ego pose change between consecutive frames.

    rotation/translation express the current ego frame in the previous
    one: a point with current-frame coordinates q maps to previous-frame
    coordinates R @ q + t.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.max(np.abs(R.T @ R - np.eye(3))) >= 1e-9 or np.linalg.det(R) < 0:
            raise ValueError("ego-motion rotation must be a proper rotation")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "EgoMotion":
        return EgoMotion(np.eye(3), np.zeros(3))

    @staticmethod
    def between(prev_rotation, prev_translation, cur_rotation, cur_translation) -> "EgoMotion":
        """Motion from two absolute ego->world poses."""
        Rp = np.asarray(prev_rotation, dtype=np.float64)
        Rc = np.asarray(cur_rotation, dtype=np.float64)
        tp = np.asarray(prev_translation, dtype=np.float64)
        tc = np.asarray(cur_translation, dtype=np.float64)
        return EgoMotion(Rp.T @ Rc, Rp.T @ (tc - tp))

    def compose(self, later: "EgoMotion") -> "EgoMotion":
        """Motion covering self (t0->t1) followed by later (t1->t2)."""
        return EgoMotion(
            self.rotation @ later.rotation,
            self.rotation @ later.translation + self.translation,
        )

    def planar(self) -> tuple[float, float, float]:
        """SE(2) reduction: (yaw, t_x, t_y)."""
        yaw = float(np.arctan2(self.rotation[1, 0], self.rotation[0, 0]))
        return yaw, float(self.translation[0]), float(self.translation[1])


def align_previous(prev: np.ndarray, motion: EgoMotion, grid: BevGrid):
    """Resample previous-frame BEV features into the current ego frame.

    prev is [h*w, d]. The motion is reduced to SE(2) (yaw + planar
    translation); roll/pitch at parking speed is negligible and BEV is a
    ground-plane raster. Returns (aligned [h*w, d], validity [h*w] bool);
    cells whose source location falls outside the previous grid are
    zero-filled and flagged invalid.

    The resampling works in cell units so identity motion reproduces the
    input bit-for-bit.
    """
    prev = np.asarray(prev)
    if prev.shape[0] != grid.n_cells:
        raise ValueError(f"prev has {prev.shape[0]} cells, grid has {grid.n_cells}")

    yaw, tx, ty = motion.planar()
    cos, sin = np.cos(yaw), np.sin(yaw)

    xs = np.arange(grid.w) - grid.w / 2.0
    ys = np.arange(grid.h) - grid.h / 2.0
    gx, gy = np.meshgrid(xs, ys)
    # rotate current cell offsets into the previous frame, in cell units
    px = cos * gx - sin * gy + tx / grid.l
    py = sin * gx + cos * gy + ty / grid.l
    sx = (px + grid.w / 2.0).ravel()
    sy = (py + grid.h / 2.0).ravel()

    validity = (sx >= 0) & (sx <= grid.w - 1) & (sy >= 0) & (sy <= grid.h - 1)

    field3 = prev.reshape(grid.h, grid.w, -1)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    wx = (sx - x0)[:, None].astype(prev.dtype)
    wy = (sy - y0)[:, None].astype(prev.dtype)

    out = np.zeros_like(prev)
    for dx, dy, cw in (
        (0, 0, (1 - wx) * (1 - wy)),
        (1, 0, wx * (1 - wy)),
        (0, 1, (1 - wx) * wy),
        (1, 1, wx * wy),
    ):
        cx = x0 + dx
        cy = y0 + dy
        inb = (cx >= 0) & (cx < grid.w) & (cy >= 0) & (cy < grid.h)
        vals = field3[np.clip(cy, 0, grid.h - 1), np.clip(cx, 0, grid.w - 1)]
        out += vals * (cw * inb[:, None].astype(prev.dtype))
    out[~validity] = 0
    return out, validity
