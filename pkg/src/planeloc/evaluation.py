"""Absolute trajectory error statistics and comparison reports."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import IoFailure, NoOverlap

MODES = ("planar", "spatial")


@dataclass
class Trajectory:
    """Ordered ``(frame_id, pose)`` pairs; poses map camera to world (KITTI convention)."""

    frame_ids: list = field(default_factory=list)
    poses: list = field(default_factory=list)

    def __post_init__(self):
        self.frame_ids = [int(f) for f in self.frame_ids]
        if len(self.frame_ids) != len(self.poses):
            raise ValueError("frame_ids and poses differ in length")
        if any(b <= a for a, b in zip(self.frame_ids, self.frame_ids[1:])):
            raise ValueError("frame ids must be strictly increasing")

    @classmethod
    def from_world_to_camera(cls, frame_ids, poses):
        return cls(list(frame_ids), [p.inverse() for p in poses])

    def __len__(self):
        return len(self.frame_ids)

    def __iter__(self):
        return iter(zip(self.frame_ids, self.poses))

    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses]).reshape(-1, 3)

    def as_dict(self):
        return dict(zip(self.frame_ids, self.poses))


@dataclass
class AteReport:
    mean: float
    rmse: float
    std: float
    max: float
    min: float
    errors: np.ndarray
    frame_ids: list
    est_positions: np.ndarray
    gt_positions: np.ndarray
    mode: str = "planar"

    def row(self):
        return [self.mean, self.rmse, self.std, self.max, self.min]


def _align_rigid(src, dst):
    """Least-squares rotation and translation taking ``src`` points onto ``dst``."""
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    U, _, Vt = np.linalg.svd((dst - mu_d).T @ (src - mu_s))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt)) or 1.0])
    R = U @ D @ Vt
    return R, mu_d - R @ mu_s


def ate(est: Trajectory, gt: Trajectory, mode: str = "planar", align: bool = False) -> AteReport:
    """Per-frame translation error statistics over the frames both trajectories share.

    Planar mode measures the error over x and y only; spatial mode adds z.
    The standard deviation is the population one, so rmse^2 = mean^2 + std^2.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    gt_map = gt.as_dict()
    common = [f for f in est.frame_ids if f in gt_map]
    if not common:
        raise NoOverlap("estimated and ground-truth trajectories share no frame ids")
    est_map = est.as_dict()
    p_est = np.array([est_map[f].translation for f in common])
    p_gt = np.array([gt_map[f].translation for f in common])
    if align and len(common) >= 3:
        R, t = _align_rigid(p_est, p_gt)
        p_est = p_est @ R.T + t
    d = p_est - p_gt
    if mode == "planar":
        d = d[:, :2]
    e = np.sqrt(np.sum(d * d, axis=1))
    mean = float(np.mean(e))
    return AteReport(mean=mean, rmse=float(np.sqrt(np.mean(e * e))), std=float(np.std(e)),
                     max=float(np.max(e)), min=float(np.min(e)), errors=e, frame_ids=common,
                     est_positions=p_est, gt_positions=p_gt, mode=mode)


PLOT_SCRIPT = '''"""Trajectory overlay of estimates against ground truth (x-y plane)."""
import csv
import sys

import matplotlib.pyplot as plt

est, gt = {}, {}
with open("trajectories.csv") as fh:
    for r in csv.DictReader(fh):
        xs, ys = est.setdefault(r["method"], ([], []))
        xs.append(float(r["est_x"]))
        ys.append(float(r["est_y"]))
        gt.setdefault(int(r["frame_id"]), (float(r["gt_x"]), float(r["gt_y"])))
frames = sorted(gt)
plt.plot([gt[f][0] for f in frames], [gt[f][1] for f in frames], "k-", label="ground truth")
for name, (xs, ys) in est.items():
    plt.plot(xs, ys, label=name)
plt.axis("equal")
plt.xlabel("x [m]")
plt.ylabel("y [m]")
plt.legend()
plt.savefig(sys.argv[1] if len(sys.argv) > 1 else "trajectories.png", dpi=150)
'''


def _fmt(x):
    return repr(float(x))


def report(reports: Sequence, out_dir) -> list:
    """Write summary, per-frame, and trajectory CSVs plus a plot script.

    ``reports`` holds ``(name, AteReport)`` pairs. Returns the written paths.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("report needs at least one AteReport")
    names = [n for n, _ in reports]
    if len(set(names)) != len(names):
        raise ValueError("report names must be unique")
    try:
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        summary = os.path.join(out_dir, "ate_summary.csv")
        with open(summary, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "mean", "rmse", "std", "max", "min"])
            for name, r in reports:
                w.writerow([name] + [_fmt(v) for v in r.row()])
        paths.append(summary)
        per_frame = os.path.join(out_dir, "ate_per_frame.csv")
        with open(per_frame, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "frame_id", "error"])
            for name, r in reports:
                for f, e in zip(r.frame_ids, r.errors):
                    w.writerow([name, f, _fmt(e)])
        paths.append(per_frame)
        traj = os.path.join(out_dir, "trajectories.csv")
        with open(traj, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "frame_id", "est_x", "est_y", "est_z", "gt_x", "gt_y", "gt_z"])
            for name, r in reports:
                for f, pe, pg in zip(r.frame_ids, r.est_positions, r.gt_positions):
                    w.writerow([name, f] + [_fmt(v) for v in pe] + [_fmt(v) for v in pg])
        paths.append(traj)
        script = os.path.join(out_dir, "plot_trajectories.py")
        with open(script, "w") as fh:
            fh.write(PLOT_SCRIPT)
        paths.append(script)
    except OSError as exc:
        raise IoFailure(f"cannot write report to {out_dir}: {exc}") from exc
    return paths
