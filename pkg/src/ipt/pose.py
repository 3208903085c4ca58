"""Camera pose from tag corners on the z = 0 plane.

The homography from plane coordinates to normalized image coordinates is
decomposed into ``[r1 r2 t]``; the second planar solution (the mirror
ambiguity about the line of sight) is generated explicitly and the candidate
with the lower reprojection error among those that put the camera above the
plane is kept.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .geometry import (
    CameraIntrinsics,
    FrameConvention,
    Pose,
    canonical_quaternion,
    check_rotation,
    euler_zyx,
    MOUNT,
    project_points,
)
from .homography import homography_dlt
from .validation import check_points


class DegeneracyError(ValueError):
    pass


class NoValidPoseError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PnpInput:
    points_2d: np.ndarray
    points_3d: np.ndarray
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        p2 = check_points(self.points_2d, 2, 4, "points_2d")
        p3 = check_points(self.points_3d, 3, 4, "points_3d")
        if len(p2) != len(p3):
            raise ValueError("points_2d and points_3d must have the same length")
        scale = max(1.0, float(np.abs(p3[:, :2]).max()))
        if np.abs(p3[:, 2]).max() > 1e-9 * scale:
            raise DegeneracyError("planar pose needs world points with z = 0")
        centered = p3[:, :2] - p3[:, :2].mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[0] == 0 or sv[1] / sv[0] < 1e-6:
            raise DegeneracyError("world points are collinear")
        object.__setattr__(self, "points_2d", p2)
        object.__setattr__(self, "points_3d", p3)


@dataclass(frozen=True, eq=False)
class WorldPose:
    """Camera-to-world rotation and camera position; angles in degrees."""

    rotation: np.ndarray
    translation: np.ndarray
    yaw: float
    pitch: float
    roll: float

    @property
    def position(self) -> np.ndarray:
        return self.translation

    @property
    def body_rotation(self) -> np.ndarray:
        return self.rotation @ MOUNT

    def quaternion(self) -> np.ndarray:
        """Body attitude as (w, x, y, z), w >= 0."""
        from scipy.spatial.transform import Rotation

        return canonical_quaternion(Rotation.from_matrix(self.body_rotation).as_quat(scalar_first=True))

    def as_pose(self) -> Pose:
        return Pose(self.rotation, self.translation, FrameConvention.CAMERA_TO_WORLD)


def _normalized(points_2d: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    return np.c_[(points_2d[:, 0] - intr.u0) / intr.fx, (points_2d[:, 1] - intr.v0) / intr.fy]


def _nearest_rotation(M: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def _translation_for(R: np.ndarray, pw: np.ndarray, xn: np.ndarray) -> np.ndarray:
    """Least-squares translation given the rotation (linear in t)."""
    rp = pw @ R.T
    n = len(pw)
    A = np.zeros((2 * n, 3))
    b = np.empty(2 * n)
    A[0::2, 0] = 1.0
    A[0::2, 2] = -xn[:, 0]
    b[0::2] = xn[:, 0] * rp[:, 2] - rp[:, 0]
    A[1::2, 1] = 1.0
    A[1::2, 2] = -xn[:, 1]
    b[1::2] = xn[:, 1] * rp[:, 2] - rp[:, 1]
    return np.linalg.lstsq(A, b, rcond=None)[0]


def reprojection_error(pose: Pose, pnp: PnpInput) -> float:
    """RMSE (pixels) between projected world points and observed image points."""
    pose = pose.world_to_camera()
    pc = pnp.points_3d @ pose.rotation.T + pose.translation
    uvw = pc @ pnp.intrinsics.matrix.T
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = uvw[:, :2] / uvw[:, 2:3]
    return float(np.sqrt(np.mean(np.sum((uv - pnp.points_2d) ** 2, axis=1))))


@dataclass(frozen=True, eq=False)
class PoseCandidate:
    pose: Pose
    rmse: float
    valid: bool


def planar_pose_candidates(pnp: PnpInput) -> list[PoseCandidate]:
    """The two planar solutions, primary (homography) one first."""
    pw = pnp.points_3d
    xn = _normalized(pnp.points_2d, pnp.intrinsics)
    H = homography_dlt(pw[:, :2], xn)
    h1, h2, h3 = H[:, 0], H[:, 1], H[:, 2]
    lam = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
    # the plane must lie in front of the camera
    centroid = np.r_[pw[:, :2].mean(axis=0), 1.0]
    if (H @ centroid)[2] * lam < 0:
        lam = -lam
    r1, r2 = lam * h1, lam * h2
    R1 = _nearest_rotation(np.c_[r1, r2, np.cross(r1, r2)])
    t1 = _translation_for(R1, pw, xn)

    v = R1 @ pw.mean(axis=0) + t1
    v = v / np.linalg.norm(v)
    R2 = (np.eye(3) - 2.0 * np.outer(v, v)) @ R1 @ np.diag([1.0, 1.0, -1.0])
    R2 = _nearest_rotation(R2)
    t2 = _translation_for(R2, pw, xn)

    out = []
    for R, t in ((R1, t1), (R2, t2)):
        pose = Pose(R, t, FrameConvention.WORLD_TO_CAMERA)
        depth = pw @ R.T + t
        center_z = (-R.T @ t)[2]
        valid = bool((depth[:, 2] > 0).all() and center_z > 0)
        out.append(PoseCandidate(pose, reprojection_error(pose, pnp), valid))
    return out


def solve_planar_pnp(pnp: PnpInput) -> tuple[Pose, float]:
    """World-to-camera pose and its reprojection RMSE."""
    candidates = [c for c in planar_pose_candidates(pnp) if c.valid]
    if not candidates:
        raise NoValidPoseError("no solution places the camera above the plane")
    best = min(candidates, key=lambda c: c.rmse)
    return best.pose, best.rmse


def invert_pose(pose: Pose) -> WorldPose:
    """Camera-to-world transform ``[R^T | -R^T T]`` with derived Z-Y-X angles."""
    pose = pose.world_to_camera()
    R = check_rotation(pose.rotation)
    Rw = R.T
    Tw = -R.T @ pose.translation
    yaw, pitch, roll = euler_zyx(Rw @ MOUNT)
    return WorldPose(Rw, Tw, yaw, pitch, roll)


class PlanarPoseEstimator(BaseEstimator):
    """Estimator form of the planar pose solver.

    ``fit(X, y)`` takes world points ``X`` (n x 3, z = 0) and their pixel
    observations ``y`` (n x 2); ``predict(X)`` projects world points with the
    fitted pose.
    """

    def __init__(self, intrinsics: CameraIntrinsics | None = None):
        self.intrinsics = intrinsics

    def fit(self, X, y):
        if self.intrinsics is None:
            raise ValueError("PlanarPoseEstimator needs camera intrinsics")
        pnp = PnpInput(y, X, self.intrinsics)
        self.pose_, self.rmse_ = solve_planar_pnp(pnp)
        self.world_pose_ = invert_pose(self.pose_)
        self.n_points_ = len(pnp.points_3d)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "pose_")
        return project_points(self.intrinsics, self.pose_, check_points(X, 3, 1, "X"))

    def score(self, X, y) -> float:
        """Negative reprojection RMSE, so that larger is better."""
        pred = self.predict(X)
        return -float(np.sqrt(np.mean(np.sum((pred - np.asarray(y)) ** 2, axis=1))))
