"""Rigid transforms, se(3) maps, and the rectified stereo pinhole camera.

Poses are world-to-camera: ``pose.apply(p_world)`` gives camera-frame
coordinates (x right, y down, z forward). Twists are ordered
``(rho, phi)``: translation first, then axis-angle rotation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateDisparity, NonPositiveDepth

SMALL_ANGLE = 1e-4
DEPTH_EPSILON = 1e-6
DISPARITY_EPSILON = 0.1


def hat(v):
    """Skew-symmetric matrix of a 3-vector, or a stack of them."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _rotation_coeffs(theta):
    """sin(t)/t, (1-cos t)/t^2, (t-sin t)/t^3 with Taylor fallback near zero."""
    theta = np.asarray(theta, dtype=float)
    small = theta < SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(t) / t)
    b = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, (1.0 - np.cos(t)) / (t * t))
    c = np.where(small, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0, (t - np.sin(t)) / (t ** 3))
    return a, b, c


def so3_exp_batch(phi):
    """Rodrigues' formula for an (n, 3) array of rotation vectors."""
    phi = np.asarray(phi, dtype=float).reshape(-1, 3)
    theta = np.linalg.norm(phi, axis=1)
    a, b, _ = _rotation_coeffs(theta)
    K = hat(phi)
    K2 = K @ K
    return np.eye(3) + a[:, None, None] * K + b[:, None, None] * K2


def so3_left_jacobian_batch(phi):
    phi = np.asarray(phi, dtype=float).reshape(-1, 3)
    theta = np.linalg.norm(phi, axis=1)
    _, b, c = _rotation_coeffs(theta)
    K = hat(phi)
    return np.eye(3) + b[:, None, None] * K + c[:, None, None] * (K @ K)


def se3_exp_batch(xi):
    """Exponential map for an (n, 6) array of (rho, phi) twists -> (R, t)."""
    xi = np.asarray(xi, dtype=float).reshape(-1, 6)
    R = so3_exp_batch(xi[:, 3:])
    J = so3_left_jacobian_batch(xi[:, 3:])
    t = np.einsum("nij,nj->ni", J, xi[:, :3])
    return R, t


def nearest_rotation(R):
    """Closest rotation matrix (Frobenius norm) to each of (..., 3, 3)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.ones(R.shape[:-1])
    D[..., 2] = np.linalg.det(U @ Vt)
    return (U * D[..., None, :]) @ Vt


def so3_log(R):
    R = np.asarray(R, dtype=float)
    skew = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arctan2(np.linalg.norm(skew) / 2.0, cos_theta))
    if theta < SMALL_ANGLE:
        # sin(t)/t ~ 1 - t^2/6
        return skew / (2.0 * (1.0 - theta * theta / 6.0))
    if np.pi - theta > 1e-3:
        return skew * theta / (2.0 * np.sin(theta))
    # near pi: the antisymmetric part vanishes, recover the axis from R + R^T
    B = (1.0 - cos_theta) / (theta * theta)
    outer = (R + R.T) / (2.0 * B) - (1.0 / B - theta * theta) * np.eye(3)
    outer = (outer + outer.T) / 2.0
    i = int(np.argmax(np.diag(outer)))
    axis = outer[:, i] / np.sqrt(max(outer[i, i], 1e-300))
    axis /= np.linalg.norm(axis)
    s = float(axis @ skew)
    if abs(s) > 1e-12:
        if s < 0:
            axis = -axis
    else:
        # exactly pi: +axis and -axis are the same rotation
        nz = np.flatnonzero(np.abs(axis) > 1e-12)
        if axis[nz[0]] < 0:
            axis = -axis
    return axis * theta


@dataclass(frozen=True, eq=False)
class Twist:
    rho: np.ndarray = field(default_factory=lambda: np.zeros(3))
    phi: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=float).reshape(3))
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=float).reshape(3))

    def as_vector(self):
        return np.concatenate([self.rho, self.phi])

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float).reshape(6)
        return cls(v[:3], v[3:])


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``x -> rotation @ x + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    def as_matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, points):
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def inverse(self):
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    __matmul__ = compose

    def normalized(self) -> "Pose":
        """Same pose with the rotation projected back onto SO(3)."""
        return Pose(nearest_rotation(self.rotation), self.translation)

    def center(self):
        """Camera position in the world when this pose is world-to-camera."""
        return -self.rotation.T @ self.translation

    def is_rigid(self, tol=1e-9):
        R = self.rotation
        return (np.max(np.abs(R.T @ R - np.eye(3))) <= tol
                and abs(np.linalg.det(R) - 1.0) <= tol)


def se3_exp(xi: Twist) -> Pose:
    R, t = se3_exp_batch(xi.as_vector()[None])
    return Pose(R[0], t[0])


def se3_log(pose: Pose) -> Twist:
    phi = so3_log(pose.rotation)
    theta = float(np.linalg.norm(phi))
    K = hat(phi)
    if theta < SMALL_ANGLE:
        coeff = 1.0 / 12.0 + theta ** 2 / 720.0 + theta ** 4 / 30240.0
    else:
        coeff = (1.0 - theta * np.sin(theta) / (2.0 * (1.0 - np.cos(theta)))) / theta ** 2
    J_inv = np.eye(3) - 0.5 * K + coeff * (K @ K)
    return Twist(J_inv @ pose.translation, phi)


def rotation_angle(R) -> float:
    return float(np.arccos(np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)))


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0 and self.baseline > 0):
            raise ValueError("fx, fy and baseline must be positive")

    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Landmark:
    id: int
    position: np.ndarray
    plane_id: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))

    def moved(self, position) -> "Landmark":
        return Landmark(self.id, position, self.plane_id)


def project_camera_points(k: CameraIntrinsics, pc):
    """Pinhole projection of (n, 3) camera-frame points; no depth check."""
    pc = np.asarray(pc, dtype=float)
    z = pc[..., 2]
    return np.stack([k.fx * pc[..., 0] / z + k.cx, k.fy * pc[..., 1] / z + k.cy], axis=-1)


def project(k: CameraIntrinsics, pose: Pose, point_world, depth_epsilon=DEPTH_EPSILON):
    pc = pose.apply(point_world)
    if pc[2] <= depth_epsilon:
        raise NonPositiveDepth(f"camera-frame depth {pc[2]:.3g} m")
    return project_camera_points(k, pc)


def triangulate_stereo(k: CameraIntrinsics, pixel_left, disparity, disparity_epsilon=DISPARITY_EPSILON):
    """Back-project a left-image pixel with known disparity into the left camera frame."""
    if not disparity > disparity_epsilon:
        raise DegenerateDisparity(f"disparity {disparity!r} px below {disparity_epsilon} px")
    u, v = pixel_left
    z = k.fx * k.baseline / disparity
    return np.array([(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z])


def stereo_disparity(k: CameraIntrinsics, point_camera):
    return k.fx * k.baseline / point_camera[..., 2]
