"""Per-pixel raycasting of scenes through the exact fisheye model.

Each valid pixel is unprojected to a ray, cast against the ground plane
and every box (slab method), and labeled with the nearest hit's class.
The pseudo-RGB image is the class palette shaded by hit distance, so the
hue of a pixel always matches its semantic class.
"""

from __future__ import annotations

import numpy as np

from ..camera import FisheyeCamera, unproject_array
from ..classes import PALETTE, SEM_SKY, SEM_VOID, SEG_GROUND
from .scene import Scene

_SHADE_NEAR = 1.0
_SHADE_FAR = 0.35
_SHADE_SCALE = 18.0  # distance (m) over which shading decays


def _ray_boxes(origins, dirs, boxes):
    """Nearest positive hit parameter per ray against every box.

    origins/dirs are [N, 3]; returns (t_hit [N], class_id [N]) with inf/-1
    where nothing is hit.
    """
    n = len(dirs)
    t_best = np.full(n, np.inf)
    cls_best = np.full(n, -1, dtype=np.int64)
    with np.errstate(divide="ignore"):
        inv = 1.0 / dirs

    for box in boxes:
        lo = np.array([box.cx - box.sx / 2.0, box.cy - box.sy / 2.0, 0.0])
        hi = np.array([box.cx + box.sx / 2.0, box.cy + box.sy / 2.0, box.height])
        t1 = (lo - origins) * inv
        t2 = (hi - origins) * inv
        # rays parallel to a slab (inv = +-inf) work out through inf arithmetic
        # unless the origin sits exactly on a face; scenes avoid that.
        tmin = np.minimum(t1, t2).max(axis=1)
        tmax = np.maximum(t1, t2).min(axis=1)
        hit = (tmax >= tmin) & (tmax > 1e-9)
        t_near = np.where(tmin > 1e-9, tmin, tmax)  # inside-the-box rays exit
        better = hit & (t_near < t_best)
        t_best[better] = t_near[better]
        cls_best[better] = box.class_id
    return t_best, cls_best


def render_view(scene: Scene, cam: FisheyeCamera, ego_rotation: np.ndarray,
                ego_translation: np.ndarray):
    """Render one camera: returns (semantic [H, W] uint8, rgb [H, W, 3] uint8).

    The camera extrinsics are rig-relative (ego frame -> camera frame);
    the ego pose places the rig in the world. Masked pixels get the void
    class, rays that miss everything get sky.
    """
    R_we = np.asarray(ego_rotation, dtype=np.float64)
    t_we = np.asarray(ego_translation, dtype=np.float64)

    h, w = cam.height, cam.width
    sem = np.full((h, w), SEM_VOID, dtype=np.uint8)
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    rgb[:] = PALETTE[SEM_VOID]

    vs, us = np.nonzero(cam.valid_mask)
    if len(us) == 0:
        return sem, rgb
    rays_cam, ok = unproject_array(cam, us + 0.5, vs + 0.5)
    us, vs, rays_cam = us[ok], vs[ok], rays_cam[ok]

    # camera frame -> ego frame -> world frame
    center_ego = cam.center_world
    dirs_ego = rays_cam @ cam.rotation  # R^T applied from the right
    origin_w = R_we @ center_ego + t_we
    dirs_w = dirs_ego @ R_we.T

    n = len(dirs_w)
    origins = np.broadcast_to(origin_w, (n, 3))

    t_box, cls_box = _ray_boxes(origins, dirs_w, scene.boxes)

    # infinite ground plane z = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = -origin_w[2] / dirs_w[:, 2]
    ground_ok = (dirs_w[:, 2] < -1e-12) & (t_ground > 1e-9)

    t_hit = t_box.copy()
    cls_hit = cls_box.copy()
    ground_wins = ground_ok & (t_ground < t_hit)
    t_hit[ground_wins] = t_ground[ground_wins]
    cls_hit[ground_wins] = SEG_GROUND
    cls_hit[~np.isfinite(t_hit)] = SEM_SKY

    sem[vs, us] = cls_hit.astype(np.uint8)

    palette = np.array([PALETTE[i] for i in range(len(PALETTE))], dtype=np.float64)
    shade = np.ones(n)
    finite = np.isfinite(t_hit)
    shade[finite] = _SHADE_FAR + (_SHADE_NEAR - _SHADE_FAR) * np.exp(
        -t_hit[finite] / _SHADE_SCALE)
    colors = palette[cls_hit] * shade[:, None]
    rgb[vs, us] = np.clip(np.rint(colors), 0, 255).astype(np.uint8)
    return sem, rgb
