"""Frame-by-frame localization: predict, track, triangulate, associate, window BA."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import DegenerateDisparity, InsufficientObservations
from ..geometry import CameraIntrinsics, Landmark, Pose, triangulate_stereo
from ..plane_map import PlaneMap, associate
from .graph import FactorGraph, LmConfig, PlaneFactor
from .lm import lm_solve
from .window import SlidingWindow, window_update

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LocalizerConfig:
    lambda_weight: float = 0.5
    sigma_px: float = 1.0
    sigma_plane: float = 0.1
    window: int = 10
    adaptive_window: bool = False
    window_boost: int = 5
    boost_angle_deg: float = 15.0
    min_obs: int = 10
    min_landmark_obs: int = 2
    anchor_frames: int = 2
    dist_thresh: float = 0.2
    angle_thresh: float = 15.0
    support_radius: float = 0.5
    prune_associations: bool = True
    max_depth: float = 40.0
    disparity_epsilon: float = 0.1
    depth_epsilon: float = 1e-6
    lm: LmConfig = field(default_factory=LmConfig)


@dataclass(frozen=True)
class FrameResult:
    frame_id: int
    pose: Pose
    cost: float
    iterations: int
    window_size: int
    plane_landmarks: int
    new_landmarks: int


class Localizer:
    """Owns one localization session's factor graph and sliding window."""

    def __init__(self, camera: CameraIntrinsics, plane_map: Optional[PlaneMap] = None,
                 config: LocalizerConfig = LocalizerConfig()):
        self.camera = camera
        self.plane_map = plane_map if plane_map is not None else PlaneMap()
        self.config = config
        self.graph = FactorGraph(camera, lambda_weight=config.lambda_weight)
        for plane in self.plane_map.planes:
            self.graph.add_plane(plane)
        self.window = SlidingWindow(config.window, adaptive=config.adaptive_window,
                                    boost=config.window_boost, boost_angle_deg=config.boost_angle_deg)
        self.history = []  # accepted (frame_id, pose)
        self._info = np.eye(2) / config.sigma_px ** 2
        self._plane_info = 1.0 / config.sigma_plane ** 2

    @property
    def initialized(self):
        return bool(self.history)

    def _predict(self) -> Pose:
        last = self.history[-1][1]
        if len(self.history) < 2:
            return last
        prev = self.history[-2][1]
        return ((last @ prev.inverse()) @ last).normalized()

    def _new_landmarks(self, pose: Pose, observations):
        cam_to_world = pose.inverse()
        created = []
        for o in observations:
            if o.disparity is None:
                continue
            try:
                pc = triangulate_stereo(self.camera, o.pixel, o.disparity, self.config.disparity_epsilon)
            except DegenerateDisparity:
                continue
            if pc[2] > self.config.max_depth:
                continue
            pw = cam_to_world.apply(pc)
            plane_id = None
            if len(self.plane_map):
                plane_id = associate(pw, self.plane_map, self.config.dist_thresh,
                                     angle_thresh=self.config.angle_thresh,
                                     support_radius=self.config.support_radius)
            created.append((Landmark(o.landmark_id, pw, plane_id), o))
        return created

    def _insert(self, frame_id, pose, tracked, created, fixed):
        g = self.graph
        g.add_pose(frame_id, pose, fixed=fixed)
        for o in tracked:
            g.observations.append(o.with_info(self._info))
        for lm, o in created:
            g.add_landmark(lm)
            g.observations.append(o.with_info(self._info))
            if lm.plane_id is not None:
                g.plane_factors.append(PlaneFactor(lm.id, lm.plane_id, self._plane_info))

    def _track(self, pose: Pose, tracked) -> Pose:
        """Motion-only refinement of one pose against the current landmarks (held fixed)."""
        g = FactorGraph(self.camera, lambda_weight=1.0)
        g.add_pose(-1, pose)
        for o in tracked:
            lid = o.landmark_id
            if lid not in g.landmarks:
                g.add_landmark(self.graph.landmarks[lid], fixed=True)
            g.observations.append(type(o)(-1, lid, o.pixel, o.disparity, self._info))
        res = lm_solve(g, self.config.lm, self.config.depth_epsilon)
        return res.graph.poses[-1]

    def _solve_window(self):
        g = self.graph
        window = set(self.window.frames)
        counts = {}
        for o in g.observations:
            if o.frame_id in window:
                counts[o.landmark_id] = counts.get(o.landmark_id, 0) + 1
        keep = {l for l, c in counts.items() if c >= self.config.min_landmark_obs}
        sub = FactorGraph(self.camera, lambda_weight=g.lambda_weight)
        sub.poses = {f: g.poses[f] for f in self.window.frames}
        anchors = set(self.window.frames[:self.config.anchor_frames])
        sub.fixed_poses = anchors
        sub.landmarks = {l: g.landmarks[l] for l in sorted(keep)}
        sub.observations = [o for o in g.observations if o.landmark_id in keep and o.frame_id in window]
        sub.plane_factors = [f for f in g.plane_factors if f.landmark_id in keep]
        sub.planes = g.planes
        if len(sub.poses) <= len(anchors) or not sub.landmarks:
            return None
        res = lm_solve(sub, self.config.lm, self.config.depth_epsilon)
        g.poses.update({f: p for f, p in res.graph.poses.items() if f not in anchors})
        g.landmarks.update(res.graph.landmarks)
        if self.config.prune_associations:
            self._prune_plane_factors(keep)
        return res

    def _prune_plane_factors(self, landmark_ids):
        """Drop associations whose refined landmark left the plane's distance gate."""
        g = self.graph
        kept = []
        for f in g.plane_factors:
            lm = g.landmarks[f.landmark_id]
            if f.landmark_id in landmark_ids and abs(g.planes[f.plane_id].signed_distance(lm.position)) > self.config.dist_thresh:
                g.landmarks[lm.id] = Landmark(lm.id, lm.position, None)
                continue
            kept.append(f)
        g.plane_factors = kept

    def process_frame(self, frame_id: int, observations, initial_pose: Optional[Pose] = None) -> FrameResult:
        """Estimate the pose of ``frame_id`` from its observations.

        The first processed frame takes ``initial_pose`` (identity if omitted)
        and is held fixed. Raises InsufficientObservations without changing
        the session state when a frame cannot be localized.
        """
        observations = [o for o in observations if o.frame_id == frame_id]
        cfg = self.config
        if not self.initialized:
            pose = initial_pose if initial_pose is not None else Pose.identity()
            created = self._new_landmarks(pose, observations)
            if len(created) < cfg.min_obs:
                raise InsufficientObservations(
                    f"frame {frame_id}: {len(created)} triangulated landmarks, need {cfg.min_obs}")
            self._insert(frame_id, pose, [], created, fixed=True)
            self.window, self.graph = window_update(self.window, frame_id, self.graph)
            self.history.append((frame_id, pose))
            return FrameResult(frame_id, pose, 0.0, 0, len(self.window.frames),
                               sum(lm.plane_id is not None for lm, _ in created), len(created))

        tracked = [o for o in observations if o.landmark_id in self.graph.landmarks]
        if len(tracked) < cfg.min_obs:
            raise InsufficientObservations(
                f"frame {frame_id}: {len(tracked)} observations of known landmarks, need {cfg.min_obs}")
        pose = self._track(self._predict(), tracked)
        fresh = [o for o in observations if o.landmark_id not in self.graph.landmarks]
        created = self._new_landmarks(pose, fresh)
        self._insert(frame_id, pose, tracked, created, fixed=False)
        self.window, self.graph = window_update(self.window, frame_id, self.graph)
        res = self._solve_window()
        pose = self.graph.poses[frame_id]
        self.history.append((frame_id, pose))
        plane_lms = sum(1 for f in self.graph.plane_factors)
        return FrameResult(frame_id, pose, res.final_cost if res else 0.0,
                           len(res.stats) if res else 0, len(self.window.frames), plane_lms, len(created))


def localize_frame(localizer: Localizer, frame_id: int, observations,
                   initial_pose: Optional[Pose] = None) -> Pose:
    return localizer.process_frame(frame_id, observations, initial_pose).pose
