"""Unified-projection fisheye camera model with radial-tangential distortion.

Projection chain: world point -> camera frame (R, T) -> unit sphere ->
shift by the mirror parameter xi along z -> normalized image plane ->
polynomial distortion (radial k1, k2; tangential k3, k4) -> intrinsics
(gamma1, gamma2, skew alpha, principal point c1, c2).

Conventions:
  - Camera frame: x right, y down, z along the optical axis.
  - `rotation` maps BEV/world-frame points into the camera frame,
    p_cam = R @ p_world + T.
  - `valid_mask` is stored image-style with shape (height, width) and is
    indexed mask[v, u]; a pixel is usable iff its mask entry is True.
  - All geometry runs in float64.

Scalar operations mirror a vectorized `*_array` variant used by the
reference-table builder and the synthetic renderer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .netpbm import read_pgm, write_pgm

# s_z + xi below this is treated as behind the projection singularity
FRONT_EPS = 1e-6

_UNDISTORT_MAX_ITERS = 50
_UNDISTORT_STEP_TOL = 1e-12
_UNDISTORT_RESIDUAL_TOL = 1e-9


class NonConvergentError(RuntimeError):
    """Iterative undistortion failed to reach tolerance."""


class NoPreimageError(ValueError):
    """Normalized coordinates lie outside the unified model's forward image."""


class ProjectionFailure(enum.Enum):
    OK = "ok"
    BEHIND_CAMERA = "behind_camera"
    OUTSIDE_IMAGE = "outside_image"
    MASKED_OUT = "masked_out"


@dataclass(frozen=True)
class Projection:
    """Continuous pixel coordinates plus a validity verdict."""

    u: float
    v: float
    valid: bool
    reason: ProjectionFailure

    def __iter__(self):
        return iter((self.u, self.v))


@dataclass(frozen=True)
class FisheyeCamera:
    """Immutable calibration: intrinsics, mirror parameter, distortion, pose."""

    gamma1: float
    gamma2: float
    alpha: float
    c1: float
    c2: float
    xi: float
    k1: float
    k2: float
    k3: float
    k4: float
    width: int
    height: int
    rotation: np.ndarray
    translation: np.ndarray
    valid_mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ValueError("focal lengths must be positive")
        if self.xi < 0:
            raise ValueError("mirror parameter must be non-negative")
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        T = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.max(np.abs(R.T @ R - np.eye(3))) >= 1e-9:
            raise ValueError("rotation is not orthonormal")
        if np.linalg.det(R) < 0:
            raise ValueError("rotation must have determinant +1")
        mask = self.valid_mask
        if mask is None:
            mask = np.ones((self.height, self.width), dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != (self.height, self.width):
                raise ValueError(
                    f"valid_mask shape {mask.shape} does not match image "
                    f"(height, width)=({self.height}, {self.width})"
                )
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", T)
        object.__setattr__(self, "valid_mask", mask)

    @property
    def center_world(self) -> np.ndarray:
        """Camera center expressed in the world/BEV frame."""
        return -self.rotation.T @ self.translation


def world_to_camera(cam: FisheyeCamera, p_world) -> np.ndarray:
    """Rigid transform into the camera frame: R @ p + T."""
    p = np.asarray(p_world, dtype=np.float64).reshape(3)
    return cam.rotation @ p + cam.translation


def apply_distortion(cam: FisheyeCamera, x: float, y: float) -> tuple[float, float]:
    """Radial (k1, k2) + tangential (k3, k4) distortion of normalized coords."""
    rho2 = x * x + y * y
    L = cam.k1 * rho2 + cam.k2 * rho2 * rho2
    xd = x + x * L + 2.0 * cam.k3 * x * y + cam.k4 * (rho2 + 2.0 * x * x)
    yd = y + y * L + cam.k3 * (rho2 + 2.0 * y * y) + 2.0 * cam.k4 * x * y
    return xd, yd


def _distort_arrays(cam: FisheyeCamera, x: np.ndarray, y: np.ndarray):
    rho2 = x * x + y * y
    L = cam.k1 * rho2 + cam.k2 * rho2 * rho2
    xd = x + x * L + 2.0 * cam.k3 * x * y + cam.k4 * (rho2 + 2.0 * x * x)
    yd = y + y * L + cam.k3 * (rho2 + 2.0 * y * y) + 2.0 * cam.k4 * x * y
    return xd, yd


def undistort(cam: FisheyeCamera, xd: float, yd: float) -> tuple[float, float]:
    """Invert apply_distortion with a fixed-point iteration seeded at (xd, yd).

    Raises NonConvergentError if the step tolerance is not reached in 50
    iterations or the residual check fails.
    """
    x, y = undistort_array(cam, np.asarray([xd]), np.asarray([yd]))
    return float(x[0]), float(y[0])


def undistort_array(cam: FisheyeCamera, xd: np.ndarray, yd: np.ndarray):
    """Vectorized fixed-point undistortion. All points must converge."""
    xd = np.asarray(xd, dtype=np.float64)
    yd = np.asarray(yd, dtype=np.float64)
    x, y = xd.copy(), yd.copy()
    for _ in range(_UNDISTORT_MAX_ITERS):
        fx, fy = _distort_arrays(cam, x, y)
        nx = xd - (fx - x)
        ny = yd - (fy - y)
        if not (np.all(np.isfinite(nx)) and np.all(np.isfinite(ny))):
            raise NonConvergentError("undistortion diverged to non-finite values")
        step = max(np.max(np.abs(nx - x)), np.max(np.abs(ny - y)))
        x, y = nx, ny
        if step < _UNDISTORT_STEP_TOL:
            break
    fx, fy = _distort_arrays(cam, x, y)
    residual = max(np.max(np.abs(fx - xd)), np.max(np.abs(fy - yd)))
    if residual >= _UNDISTORT_RESIDUAL_TOL:
        raise NonConvergentError(
            f"undistortion residual {residual:.3e} above tolerance"
        )
    return x, y


def pixel_valid(cam: FisheyeCamera, u: float, v: float) -> bool:
    """True iff (floor(u), floor(v)) is inside the image and unmasked."""
    ui = int(np.floor(u))
    vi = int(np.floor(v))
    if not (0 <= ui < cam.width and 0 <= vi < cam.height):
        return False
    return bool(cam.valid_mask[vi, ui])


def project(cam: FisheyeCamera, p_world) -> Projection:
    """Project a world point through the full fisheye chain.

    Raises ValueError for a point at the camera center; behind-camera and
    out-of-image cases come back as invalid Projections instead.
    """
    u, v, valid, reason = project_array(
        cam, np.asarray(p_world, dtype=np.float64).reshape(1, 3)
    )
    return Projection(float(u[0]), float(v[0]), bool(valid[0]), reason[0])


def project_array(cam: FisheyeCamera, pts_world: np.ndarray):
    """Vectorized projection of an (N, 3) array of world points.

    Returns (u, v, valid, reasons); u/v are NaN where the point is behind
    the projection singularity.
    """
    pts = np.asarray(pts_world, dtype=np.float64).reshape(-1, 3)
    p_cam = pts @ cam.rotation.T + cam.translation
    norm = np.linalg.norm(p_cam, axis=1)
    if np.any(norm <= 1e-12):
        raise ValueError("point coincides with the camera center")
    s = p_cam / norm[:, None]
    denom = s[:, 2] + cam.xi
    front = denom > FRONT_EPS

    u = np.full(len(pts), np.nan)
    v = np.full(len(pts), np.nan)
    reasons = np.full(len(pts), ProjectionFailure.BEHIND_CAMERA, dtype=object)
    if np.any(front):
        x = s[front, 0] / denom[front]
        y = s[front, 1] / denom[front]
        xd, yd = _distort_arrays(cam, x, y)
        u[front] = cam.gamma1 * xd + cam.alpha * cam.gamma1 * yd + cam.c1
        v[front] = cam.gamma2 * yd + cam.c2

    inside = front & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    reasons[front & ~inside] = ProjectionFailure.OUTSIDE_IMAGE

    unmasked = np.zeros(len(pts), dtype=bool)
    if np.any(inside):
        ui = np.floor(u[inside]).astype(int)
        vi = np.floor(v[inside]).astype(int)
        unmasked[inside] = cam.valid_mask[vi, ui]
    reasons[inside & ~unmasked] = ProjectionFailure.MASKED_OUT

    valid = inside & unmasked
    reasons[valid] = ProjectionFailure.OK
    return u, v, valid, reasons


def unproject(cam: FisheyeCamera, u: float, v: float) -> np.ndarray:
    """Invert the projection chain into a unit ray in the camera frame.

    The pixel must be inside image bounds. Raises NoPreimageError when the
    undistorted coordinates fall outside the model's forward image (only
    possible for xi > 1) and propagates NonConvergentError from undistort.
    """
    if not (0 <= u < cam.width and 0 <= v < cam.height):
        raise ValueError(f"pixel ({u}, {v}) outside image bounds")
    ray, ok = unproject_array(cam, np.asarray([u]), np.asarray([v]))
    if not ok[0]:
        raise NoPreimageError(
            f"pixel ({u}, {v}) has no preimage on the forward hemisphere"
        )
    return ray[0]


def unproject_array(cam: FisheyeCamera, u: np.ndarray, v: np.ndarray):
    """Vectorized inverse projection.

    Returns (rays, ok): (N, 3) unit rays in the camera frame and a boolean
    preimage-exists flag per pixel (rays are NaN where not ok). Bounds are
    not checked here.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    yd = (v - cam.c2) / cam.gamma2
    xd = (u - cam.c1 - cam.alpha * cam.gamma1 * yd) / cam.gamma1
    x, y = undistort_array(cam, xd, yd)

    r2 = x * x + y * y
    disc = 1.0 + (1.0 - cam.xi * cam.xi) * r2
    ok = disc >= 0.0
    eta = np.full_like(r2, np.nan)
    eta[ok] = (cam.xi + np.sqrt(disc[ok])) / (1.0 + r2[ok])
    rays = np.stack([x * eta, y * eta, eta - cam.xi], axis=-1)
    return rays, ok


# ---------------------------------------------------------------------------
# calibration file format
#
#   key = value lines for gamma1 gamma2 alpha c1 c2 xi k1 k2 k3 k4 width
#   height, plus `R = r00 ... r22` (row-major), `T = tx ty tz` and
#   `mask = <relative path to P5 PGM>` (255 = valid). '#' starts a comment.
# ---------------------------------------------------------------------------

_SCALAR_KEYS = (
    "gamma1", "gamma2", "alpha", "c1", "c2", "xi",
    "k1", "k2", "k3", "k4", "width", "height",
)


def load_calibration(path) -> FisheyeCamera:
    """Parse a calibration text file; the mask path is resolved relatively."""
    import os

    entries: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"malformed calibration line: {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            entries[key] = value

    missing = [k for k in _SCALAR_KEYS + ("R", "T") if k not in entries]
    if missing:
        raise ValueError(f"calibration file missing keys: {missing}")

    scalars = {k: float(entries[k]) for k in _SCALAR_KEYS}
    R = np.array(entries["R"].split(), dtype=np.float64)
    if R.size != 9:
        raise ValueError("R must have 9 entries")
    T = np.array(entries["T"].split(), dtype=np.float64)
    if T.size != 3:
        raise ValueError("T must have 3 entries")

    mask = None
    if "mask" in entries:
        mask_path = os.path.join(os.path.dirname(os.fspath(path)), entries["mask"])
        mask = read_pgm(mask_path) >= 128

    return FisheyeCamera(
        gamma1=scalars["gamma1"],
        gamma2=scalars["gamma2"],
        alpha=scalars["alpha"],
        c1=scalars["c1"],
        c2=scalars["c2"],
        xi=scalars["xi"],
        k1=scalars["k1"],
        k2=scalars["k2"],
        k3=scalars["k3"],
        k4=scalars["k4"],
        width=int(scalars["width"]),
        height=int(scalars["height"]),
        rotation=R.reshape(3, 3),
        translation=T,
        valid_mask=mask,
    )


def save_calibration(path, cam: FisheyeCamera, mask_name: str | None = None) -> None:
    """Write a calibration file; the mask PGM goes next to it when named."""
    import os

    lines = [f"# fisheye calibration ({cam.width}x{cam.height})"]
    for key in _SCALAR_KEYS:
        value = getattr(cam, key)
        lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    lines.append("R = " + " ".join(repr(x) for x in cam.rotation.ravel()))
    lines.append("T = " + " ".join(repr(x) for x in cam.translation))
    if mask_name is not None:
        lines.append(f"mask = {mask_name}")
        mask_path = os.path.join(os.path.dirname(os.fspath(path)), mask_name)
        write_pgm(mask_path, np.where(cam.valid_mask, 255, 0).astype(np.uint8))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
