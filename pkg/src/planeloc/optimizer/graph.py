from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..geometry import CameraIntrinsics, Landmark, Pose
from ..plane_map import Plane


@dataclass(frozen=True, eq=False)
class Observation:
    """Left-image pixel of a landmark seen from a frame.

    ``info_weight`` is the 2x2 information matrix (inverse pixel covariance).
    """

    frame_id: int
    landmark_id: int
    pixel: np.ndarray
    disparity: Optional[float] = None
    info_weight: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        object.__setattr__(self, "pixel", np.asarray(self.pixel, dtype=float).reshape(2))
        info = np.asarray(self.info_weight, dtype=float).reshape(2, 2)
        a, b, c, d = info.ravel()
        symmetric = abs(b - c) <= 1e-9 * max(abs(a), abs(d), 1.0)
        if not (symmetric and a > 0 and a * d - b * c > 0):
            raise ValueError("info_weight must be symmetric positive definite")
        object.__setattr__(self, "info_weight", info)

    def with_info(self, info):
        return replace(self, info_weight=info)


@dataclass(frozen=True)
class PlaneFactor:
    landmark_id: int
    plane_id: int
    info_weight: float = 100.0

    def __post_init__(self):
        if not self.info_weight > 0:
            raise ValueError("plane factor info_weight must be positive")


@dataclass(frozen=True)
class LmConfig:
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    max_iters: int = 50
    cost_tol: float = 1e-12
    step_tol: float = 1e-12
    max_damping: float = 1e10
    min_damping: float = 1e-9
    grad_tol: float = 1e-9

    def __post_init__(self):
        if not (self.initial_damping > 0 and self.max_iters > 0
                and self.cost_tol > 0 and self.step_tol > 0):
            raise ValueError("LM settings must be positive")
        if not (0 < self.damping_down < 1 < self.damping_up):
            raise ValueError("need 0 < damping_down < 1 < damping_up")


@dataclass
class FactorGraph:
    """Poses (world-to-camera), landmarks, and the two edge types.

    ``lambda_weight`` mixes the costs: reprojection edges are weighted by it,
    coplanarity edges by ``1 - lambda_weight``.
    """

    camera: CameraIntrinsics
    poses: dict = field(default_factory=dict)
    landmarks: dict = field(default_factory=dict)
    observations: list = field(default_factory=list)
    plane_factors: list = field(default_factory=list)
    planes: dict = field(default_factory=dict)
    fixed_poses: set = field(default_factory=set)
    fixed_landmarks: set = field(default_factory=set)
    lambda_weight: float = 0.5

    def copy(self) -> "FactorGraph":
        return FactorGraph(self.camera, dict(self.poses), dict(self.landmarks),
                           list(self.observations), list(self.plane_factors), dict(self.planes),
                           set(self.fixed_poses), set(self.fixed_landmarks), self.lambda_weight)

    def validate(self):
        if not 0.0 <= self.lambda_weight <= 1.0:
            raise ValueError("lambda_weight must lie in [0, 1]")
        for o in self.observations:
            if o.frame_id not in self.poses or o.landmark_id not in self.landmarks:
                raise ValueError(f"observation ({o.frame_id}, {o.landmark_id}) references a missing node")
        for f in self.plane_factors:
            if f.landmark_id not in self.landmarks or f.plane_id not in self.planes:
                raise ValueError(f"plane factor ({f.landmark_id}, {f.plane_id}) references a missing node")
        if not self.fixed_poses <= set(self.poses) or not self.fixed_landmarks <= set(self.landmarks):
            raise ValueError("fixed set names a missing node")
        if self.poses and not self.fixed_poses and not self.fixed_landmarks:
            raise ValueError("gauge is free: fix at least one pose or landmark")

    def add_pose(self, frame_id: int, pose: Pose, fixed: bool = False):
        self.poses[frame_id] = pose
        if fixed:
            self.fixed_poses.add(frame_id)

    def add_landmark(self, landmark: Landmark, fixed: bool = False):
        self.landmarks[landmark.id] = landmark
        if fixed:
            self.fixed_landmarks.add(landmark.id)

    def add_plane(self, plane: Plane):
        self.planes[plane.id] = plane
