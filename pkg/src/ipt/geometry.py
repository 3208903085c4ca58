"""Pinhole camera model and rigid poses.

Camera frame: x right, y down, z along the optical axis. A downward-looking
camera is carried by a body frame (x forward/east, y left/north, z up when
level); the fixed mount ``MOUNT`` maps body axes to camera axes, so a level
body with zero yaw looks straight down with the image x axis along world +x
and the image y axis along world -y.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

MOUNT = np.diag([1.0, -1.0, -1.0])


class BehindCameraError(ValueError):
    pass


class PoseValidationError(ValueError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    u0: float
    v0: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.u0 < self.width and 0 <= self.v0 < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.u0], [0.0, self.fy, self.v0], [0.0, 0.0, 1.0]])

    @classmethod
    def centered(cls, width: int, height: int, focal: float) -> "CameraIntrinsics":
        return cls(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0, width, height)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("fx", "fy", "u0", "v0", "width", "height")}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["u0"]), float(d["v0"]), int(d["width"]), int(d["height"]))


class FrameConvention(str, enum.Enum):
    WORLD_TO_CAMERA = "WORLD_TO_CAMERA"
    CAMERA_TO_WORLD = "CAMERA_TO_WORLD"


def check_rotation(R, tol: float = 1e-9) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.isfinite(R).all():
        raise PoseValidationError("rotation must be a finite 3x3 matrix")
    if np.abs(R.T @ R - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise PoseValidationError("rotation is not proper orthonormal")
    return R


@dataclass(frozen=True, eq=False)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray
    convention: FrameConvention = FrameConvention.WORLD_TO_CAMERA

    def __post_init__(self):
        object.__setattr__(self, "rotation", check_rotation(self.rotation))
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "convention", FrameConvention(self.convention))

    def inverse(self) -> "Pose":
        other = (
            FrameConvention.CAMERA_TO_WORLD
            if self.convention is FrameConvention.WORLD_TO_CAMERA
            else FrameConvention.WORLD_TO_CAMERA
        )
        R = self.rotation.T
        return Pose(R, -R @ self.translation, other)

    def world_to_camera(self) -> "Pose":
        return self if self.convention is FrameConvention.WORLD_TO_CAMERA else self.inverse()

    def camera_to_world(self) -> "Pose":
        return self if self.convention is FrameConvention.CAMERA_TO_WORLD else self.inverse()

    @property
    def camera_center(self) -> np.ndarray:
        return self.camera_to_world().translation

    @classmethod
    def from_body(cls, position, quaternion) -> "Pose":
        """CAMERA_TO_WORLD pose from a body position and (w, x, y, z) attitude."""
        R_wb = Rotation.from_quat(np.asarray(quaternion, dtype=np.float64), scalar_first=True).as_matrix()
        return cls(R_wb @ MOUNT, position, FrameConvention.CAMERA_TO_WORLD)

    def body_rotation(self) -> np.ndarray:
        return self.camera_to_world().rotation @ MOUNT

    def body_quaternion(self) -> np.ndarray:
        """Body attitude as a unit quaternion (w, x, y, z) with w >= 0."""
        return canonical_quaternion(Rotation.from_matrix(self.body_rotation()).as_quat(scalar_first=True))


def canonical_quaternion(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q)
    return -q if q[0] < 0 else q


def euler_zyx(R_body: np.ndarray) -> tuple[float, float, float]:
    """(yaw, pitch, roll) in degrees, Z-Y-X intrinsic convention."""
    yaw, pitch, roll = Rotation.from_matrix(R_body).as_euler("ZYX", degrees=True)
    return float(yaw), float(pitch), float(roll)


def body_from_euler(yaw: float, pitch: float = 0.0, roll: float = 0.0) -> np.ndarray:
    return Rotation.from_euler("ZYX", [yaw, pitch, roll], degrees=True).as_matrix()


def rotation_angle(R_a: np.ndarray, R_b: np.ndarray) -> float:
    """Geodesic angle (radians) between two rotations."""
    return float(np.linalg.norm(Rotation.from_matrix(R_a.T @ R_b).as_rotvec()))


def project_points(intr: CameraIntrinsics, pose: Pose, points_w) -> np.ndarray:
    """Perspective projection of world points to pixel coordinates (n x 2)."""
    pose = pose.world_to_camera()
    pw = np.atleast_2d(np.asarray(points_w, dtype=np.float64))
    pc = pw @ pose.rotation.T + pose.translation
    if (pc[:, 2] <= 0).any():
        raise BehindCameraError("point lies behind the camera")
    uvw = pc @ intr.matrix.T
    return uvw[:, :2] / uvw[:, 2:3]


def project_point(intr: CameraIntrinsics, pose: Pose, pw) -> tuple[float, float]:
    u, v = project_points(intr, pose, np.asarray(pw, dtype=np.float64).reshape(1, 3))[0]
    return float(u), float(v)


def backproject_to_plane(intr: CameraIntrinsics, pose: Pose, uv) -> tuple[np.ndarray, np.ndarray]:
    """Intersect pixel rays with the z = 0 plane.

    Returns world xy (n x 2) and a boolean array marking rays that hit the
    plane in front of the camera.
    """
    c2w = pose.camera_to_world()
    uv = np.asarray(uv, dtype=np.float64)
    d_cam = np.stack(
        [(uv[..., 0] - intr.u0) / intr.fx, (uv[..., 1] - intr.v0) / intr.fy, np.ones(uv.shape[:-1])], axis=-1
    )
    d_w = d_cam @ c2w.rotation.T
    C = c2w.translation
    with np.errstate(divide="ignore", invalid="ignore"):
        s = -C[2] / d_w[..., 2]
    hit = np.isfinite(s) & (s > 0)
    s = np.where(hit, s, 0.0)
    xy = C[:2] + s[..., None] * d_w[..., :2]
    return xy, hit
