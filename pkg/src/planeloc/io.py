"""Readers and writers for the text formats: clouds, observations, KITTI poses, plane maps.

Every reader reports malformed input as ``ParseError`` with a 1-based line
and column. Floats are written with ``repr`` so write-then-read is lossless.
"""
from __future__ import annotations

import os
import re

import numpy as np

from .errors import IoFailure, NonRigidPose, ParseError
from .evaluation import Trajectory
from .geometry import Pose, nearest_rotation
from .optimizer.graph import Observation
from .plane_map import Plane, PlaneMap
from .tensor_voting import PointCloud

_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?\Z")
_INT = re.compile(r"[+-]?\d+\Z")
OBS_HEADER = ("frame_id", "landmark_id", "u", "v", "disparity")
RIGID_TOL = 1e-6
SUPPORT_SUFFIX = ".support"


def _read_text(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data[:exc.start].count(b"\n") + 1
        col = exc.start - (data.rfind(b"\n", 0, exc.start) + 1) + 1
        raise ParseError(path, line, col, "invalid UTF-8") from None


def _write_text(path, text):
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _fields(line, sep=None):
    """Split ``line`` and return ``(token, 1-based column)`` pairs."""
    if sep is None:
        return [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", line)]
    out, col = [], 1
    for tok in line.split(sep):
        out.append((tok.strip(), col + len(tok) - len(tok.lstrip())))
        col += len(tok) + len(sep)
    return out


def _float(tok, path, lineno, col):
    if not _NUMBER.match(tok):
        raise ParseError(path, lineno, col, f"expected a decimal number, got {tok[:40]!r}")
    value = float(tok)
    if not np.isfinite(value):
        raise ParseError(path, lineno, col, f"number out of range: {tok[:40]!r}")
    return value


def _int(tok, path, lineno, col):
    if not _INT.match(tok):
        raise ParseError(path, lineno, col, f"expected an integer, got {tok[:40]!r}")
    return int(tok)


def _lines(text):
    """Split on newlines only, so line numbers match what editors show."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [l[:-1] if l.endswith("\r") else l for l in lines]


def _data_lines(text):
    for lineno, line in enumerate(_lines(text), start=1):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            yield lineno, line


def _numbers(path, lineno, line, count):
    toks = _fields(line)
    if len(toks) != count:
        col = toks[min(len(toks), count)][1] if len(toks) > count else len(line) + 1
        raise ParseError(path, lineno, col, f"expected {count} numbers, found {len(toks)}")
    return [_float(t, path, lineno, c) for t, c in toks]


# point clouds -------------------------------------------------------------

def read_cloud(path) -> PointCloud:
    """Whitespace-separated x y z per line; '#' comments and blank lines are skipped."""
    text = _read_text(path)
    rows = [_numbers(path, n, line, 3) for n, line in _data_lines(text)]
    return PointCloud(np.array(rows, dtype=float).reshape(-1, 3))


def write_cloud(cloud, path):
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    _write_text(path, "".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in pts.tolist()))


# observations -------------------------------------------------------------

def read_observations(path) -> list:
    """CSV with header ``frame_id,landmark_id,u,v,disparity``; disparity may be empty."""
    text = _read_text(path)
    lines = _lines(text)
    if not lines or tuple(t.strip() for t in lines[0].split(",")) != OBS_HEADER:
        raise ParseError(path, 1, 1, "expected header " + ",".join(OBS_HEADER))
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        toks = _fields(line, ",")
        if len(toks) != len(OBS_HEADER):
            raise ParseError(path, lineno, 1, f"expected {len(OBS_HEADER)} columns, found {len(toks)}")
        frame = _int(toks[0][0], path, lineno, toks[0][1])
        lid = _int(toks[1][0], path, lineno, toks[1][1])
        u = _float(toks[2][0], path, lineno, toks[2][1])
        v = _float(toks[3][0], path, lineno, toks[3][1])
        disp = None if toks[4][0] == "" else _float(toks[4][0], path, lineno, toks[4][1])
        out.append(Observation(frame, lid, np.array([u, v]), disp))
    return out


def write_observations(observations, path):
    lines = [",".join(OBS_HEADER)]
    for o in observations:
        d = "" if o.disparity is None else repr(float(o.disparity))
        lines.append(f"{o.frame_id},{o.landmark_id},{float(o.pixel[0])!r},{float(o.pixel[1])!r},{d}")
    _write_text(path, "\n".join(lines) + "\n")


# trajectories -------------------------------------------------------------

def _rigid_rotation(R, path, lineno):
    dev = np.max(np.abs(R.T @ R - np.eye(3)))
    if not (dev <= RIGID_TOL and np.linalg.det(R) > 0):
        raise NonRigidPose(f"{path}:{lineno}: rotation block is not a rotation "
                           f"(orthonormality error {dev:.3g}, det {np.linalg.det(R):.6g})")
    return R if dev == 0.0 else nearest_rotation(R)


def read_trajectory(path) -> Trajectory:
    """KITTI poses: 12 numbers per line, row-major [R|t], camera-to-world.

    The i-th data line is frame i. Rotation blocks within 1e-6 of orthonormal
    are projected onto SO(3); others raise NonRigidPose.
    """
    text = _read_text(path)
    poses = []
    for lineno, line in _data_lines(text):
        m = np.array(_numbers(path, lineno, line, 12)).reshape(3, 4)
        poses.append(Pose(_rigid_rotation(m[:, :3], path, lineno), m[:, 3]))
    return Trajectory(list(range(len(poses))), poses)


def format_pose(pose: Pose) -> str:
    m = np.hstack([pose.rotation, pose.translation[:, None]])
    return " ".join(repr(float(x)) for x in m.ravel())


def write_trajectory(traj: Trajectory, path):
    """One KITTI line per pose, in frame order."""
    _write_text(path, "".join(format_pose(p) + "\n" for _, p in traj))


# plane maps ---------------------------------------------------------------

def support_path(path):
    return str(path) + SUPPORT_SUFFIX


def decimate(points, voxel):
    """First point of each occupied voxel, in input order (deterministic)."""
    if voxel <= 0 or len(points) == 0:
        return points
    keys = np.floor(points / voxel).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return points[np.sort(first)]


def read_planes(path, load_support=True) -> PlaneMap:
    """Lines ``id nx ny nz b support_count``; '#' comments.

    Support points are read from the ``.support`` sidecar when it exists;
    without it the map has no support index (the shell named in the format).
    """
    text = _read_text(path)
    planes, seen = [], set()
    for lineno, line in _data_lines(text):
        toks = _fields(line)
        if len(toks) != 6:
            raise ParseError(path, lineno, 1, f"expected 6 fields, found {len(toks)}")
        pid = _int(toks[0][0], path, lineno, toks[0][1])
        if pid in seen:
            raise ParseError(path, lineno, toks[0][1], f"duplicate plane id {pid}")
        seen.add(pid)
        n = np.array([_float(t, path, lineno, c) for t, c in toks[1:4]])
        b = _float(toks[4][0], path, lineno, toks[4][1])
        count = _int(toks[5][0], path, lineno, toks[5][1])
        norm = np.linalg.norm(n)
        if not norm > 0:
            raise ParseError(path, lineno, toks[1][1], "plane normal is zero")
        if abs(norm - 1.0) > 1e-6:
            raise ParseError(path, lineno, toks[1][1], f"plane normal is not unit length ({norm:.9g})")
        planes.append(Plane(n, b, pid, count))
    support = {}
    side = support_path(path)
    if load_support and os.path.exists(side):
        support = _read_support(side, seen)
    return PlaneMap(planes, support)


def _read_support(path, plane_ids):
    text = _read_text(path)
    rows = {}
    for lineno, line in _data_lines(text):
        toks = _fields(line)
        if len(toks) != 4:
            raise ParseError(path, lineno, 1, f"expected 4 fields, found {len(toks)}")
        pid = _int(toks[0][0], path, lineno, toks[0][1])
        if pid not in plane_ids:
            raise ParseError(path, lineno, toks[0][1], f"unknown plane id {pid}")
        rows.setdefault(pid, []).append([_float(t, path, lineno, c) for t, c in toks[1:]])
    return {pid: np.array(r) for pid, r in rows.items()}


def write_planes(plane_map: PlaneMap, path, support_voxel=0.1):
    """Write the plane file and, when the map has support points, its sidecar."""
    lines = ["# id nx ny nz b support_count"]
    for p in plane_map.planes:
        norm = float(np.linalg.norm(p.normal))
        scale = 1.0 if abs(norm - 1.0) <= 1e-12 else norm  # keep unit normals bit-exact
        n = [x + 0.0 for x in (p.normal / scale).tolist()]  # no negative zeros
        b = float(p.offset / scale)
        lines.append(f"{p.id} {n[0]!r} {n[1]!r} {n[2]!r} {b!r} {p.support_count}")
    _write_text(path, "\n".join(lines) + "\n")
    if plane_map.support:
        out = ["# plane_id x y z"]
        for pid in sorted(plane_map.support):
            for x, y, z in decimate(np.asarray(plane_map.support[pid]), support_voxel).tolist():
                out.append(f"{pid} {x!r} {y!r} {z!r}")
        _write_text(support_path(path), "\n".join(out) + "\n")
    elif os.path.exists(support_path(path)):
        try:
            os.remove(support_path(path))
        except OSError as exc:
            raise IoFailure(f"cannot remove stale {support_path(path)}: {exc}") from exc
