"""End-to-end runs shared by the command line and the tests."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Optional

from . import io
from .config import RunConfig
from .errors import InsufficientObservations, IoFailure
from .evaluation import AteReport, Trajectory, ate, report
from .geometry import Pose
from .optimizer.localize import Localizer
from .plane_map import PlaneMap, build_plane_map
from .synthetic import generate_scene, preset

log = logging.getLogger("planeloc")

CONFIG_NAME = "config.txt"


@dataclass
class LocalizationRun:
    trajectory: Trajectory          # camera-to-world, one pose per frame id
    accepted: list                  # frame ids localized (not carried forward)
    log_lines: list


def _fmt(x):
    return f"{x:.6e}"


def localize_sequence(observations, plane_map: Optional[PlaneMap], config: RunConfig,
                      initial_pose: Optional[Pose] = None) -> LocalizationRun:
    """Stream frames in id order through a fresh localizer.

    ``initial_pose`` is camera-to-world. Rejected frames repeat the previous
    pose so the output has one line per frame id from the first to the last.
    """
    by_frame = {}
    for o in observations:
        by_frame.setdefault(o.frame_id, []).append(o)
    if not by_frame:
        return LocalizationRun(Trajectory(), [], ["no observations"])
    loc = Localizer(config.camera(), plane_map, config.localizer())
    start = initial_pose.inverse() if initial_pose is not None else Pose.identity()
    frame_ids = list(range(min(by_frame), max(by_frame) + 1))
    poses, accepted, lines = [], [], []
    last = start
    for f in frame_ids:
        obs = by_frame.get(f, [])
        try:
            r = loc.process_frame(f, obs, start if not loc.initialized else None)
        except InsufficientObservations as exc:
            lines.append(f"frame {f} rejected: {exc}")
            poses.append(last.inverse())
            continue
        last = r.pose
        accepted.append(f)
        poses.append(last.inverse())
        lines.append(f"frame {f} cost {_fmt(r.cost)} iterations {r.iterations} "
                     f"window {r.window_size} plane_landmarks {r.plane_landmarks} "
                     f"new_landmarks {r.new_landmarks}")
    return LocalizationRun(Trajectory(frame_ids, poses), accepted, lines)


def write_config(config: RunConfig, out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_dir}: {exc}") from exc
    io._write_text(os.path.join(out_dir, CONFIG_NAME), config.to_text())


def extract_planes(cloud_path, config: RunConfig, out_dir) -> PlaneMap:
    cloud = io.read_cloud(cloud_path)
    plane_map = build_plane_map(cloud, config.voting(), config.plane_map(), workers=config.workers)
    write_config(config, out_dir)
    io.write_planes(plane_map, os.path.join(out_dir, "planes.txt"), config.support_voxel)
    return plane_map


def localize(obs_path, planes_path, config: RunConfig, out_dir, init_pose_path=None) -> LocalizationRun:
    observations = io.read_observations(obs_path)
    plane_map = io.read_planes(planes_path)
    initial = None
    if init_pose_path is not None:
        init = io.read_trajectory(init_pose_path)
        if len(init) == 0:
            raise IoFailure(f"{init_pose_path}: no pose")
        initial = init.poses[0]
    run = localize_sequence(observations, plane_map, config, initial)
    write_config(config, out_dir)
    io.write_trajectory(run.trajectory, os.path.join(out_dir, "trajectory.txt"))
    io._write_text(os.path.join(out_dir, "run.log"), "\n".join(run.log_lines) + "\n")
    return run


def simulate(name: str, config: RunConfig, out_dir):
    scene = generate_scene(preset(name, seed=config.seed, sigma_map=config.sim_sigma_map,
                                  sigma_px=config.sim_sigma_px))
    cam = scene.camera
    config = config.with_overrides(fx=cam.fx, fy=cam.fy, cx=cam.cx, cy=cam.cy, baseline=cam.baseline)
    write_config(config, out_dir)
    io.write_cloud(scene.cloud, os.path.join(out_dir, "cloud.txt"))
    io.write_observations(scene.observations, os.path.join(out_dir, "observations.csv"))
    gt = Trajectory.from_world_to_camera(range(len(scene.poses)), scene.poses)
    io.write_trajectory(gt, os.path.join(out_dir, "groundtruth.txt"))
    io.write_planes(scene.plane_map(), os.path.join(out_dir, "planes_gt.txt"), config.support_voxel)
    return scene


def evaluate(est_path, gt_path, config: RunConfig, out_dir, name="estimate") -> AteReport:
    est = io.read_trajectory(est_path)
    gt = io.read_trajectory(gt_path)
    rep = ate(est, gt, config.mode, align=config.align)
    write_config(config, out_dir)
    report([(name, rep)], out_dir)
    return rep
