"""Default four-camera surround rig with generated validity masks.

Cameras sit just outside the ego body at the front/left/rear/right,
pitched down. A pixel is valid when its viewing angle stays inside the
lens field of view and its ray does not hit the ego body, which is also
what makes the cells under the ego invisible to every camera.
"""

from __future__ import annotations

import numpy as np

from ..camera import FisheyeCamera, unproject_array
from .render import _ray_boxes
from .scene import Box

CAMERA_NAMES = ("front", "left", "rear", "right")


def _camera_rotation(yaw: float, pitch_down: float) -> np.ndarray:
    """Rows are the camera axes (x right, y down, z optical) in the ego frame."""
    heading = np.array([np.cos(yaw), np.sin(yaw), 0.0])
    z_cam = np.cos(pitch_down) * heading - np.sin(pitch_down) * np.array([0.0, 0.0, 1.0])
    x_cam = np.array([np.sin(yaw), -np.cos(yaw), 0.0])
    y_cam = np.cross(z_cam, x_cam)
    return np.stack([x_cam, y_cam, z_cam])


def _build_mask(cam: FisheyeCamera, ego_box: Box, fov_deg: float) -> np.ndarray:
    us, vs = np.meshgrid(np.arange(cam.width), np.arange(cam.height))
    rays_cam, ok = unproject_array(cam, us.ravel() + 0.5, vs.ravel() + 0.5)

    cos_half = np.cos(np.radians(fov_deg / 2.0))
    in_fov = ok & (rays_cam[:, 2] >= cos_half)

    dirs_ego = np.where(ok[:, None], rays_cam, 0.0) @ cam.rotation
    origin = np.broadcast_to(cam.center_world, dirs_ego.shape)
    t_hit, _ = _ray_boxes(origin, dirs_ego, [ego_box])
    clear_of_body = ~np.isfinite(t_hit)

    return (in_fov & clear_of_body).reshape(cam.height, cam.width)


def make_default_rig(image_size: int = 128, ego_dims=(4.2, 1.9, 1.5),
                     fov_deg: float = 190.0, cam_height: float = 0.9,
                     pitch_deg: float = 25.0) -> list[FisheyeCamera]:
    """Front/left/rear/right fisheye cameras with masks, in that order."""
    lx, ly, hz = ego_dims
    gap = 0.05
    mounts = [
        ((lx / 2 + gap, 0.0, cam_height), 0.0),
        ((0.0, ly / 2 + gap, cam_height), np.pi / 2),
        ((-lx / 2 - gap, 0.0, cam_height), np.pi),
        ((0.0, -ly / 2 - gap, cam_height), -np.pi / 2),
    ]
    gamma = 56.0 * image_size / 128.0
    center = (image_size - 1) / 2.0
    ego_box = Box(0.0, 0.0, lx, ly, hz, "car")

    cams = []
    for pos, yaw in mounts:
        R = _camera_rotation(yaw, np.radians(pitch_deg))
        T = -R @ np.asarray(pos)
        cam = FisheyeCamera(
            gamma1=gamma, gamma2=gamma, alpha=0.0,
            c1=center, c2=center, xi=1.0,
            k1=-0.03, k2=0.002, k3=0.0005, k4=-0.0005,
            width=image_size, height=image_size,
            rotation=R, translation=T,
        )
        mask = _build_mask(cam, ego_box, fov_deg)
        cams.append(FisheyeCamera(
            gamma1=cam.gamma1, gamma2=cam.gamma2, alpha=cam.alpha,
            c1=cam.c1, c2=cam.c2, xi=cam.xi,
            k1=cam.k1, k2=cam.k2, k3=cam.k3, k4=cam.k4,
            width=cam.width, height=cam.height,
            rotation=R, translation=T, valid_mask=mask,
        ))
    return cams
