"""Ground-truth scenes with known planes, trajectories and noisy stereo observations."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidConfig
from .geometry import CameraIntrinsics, Landmark, Pose, se3_exp_batch
from .optimizer.graph import Observation
from .plane_map import Plane, PlaneMap
from .tensor_voting import PointCloud, canonical_sign

KITTI_LIKE_CAMERA = CameraIntrinsics(fx=700.0, fy=700.0, cx=620.0, cy=188.0, baseline=0.54)


def sub_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named consumer of the run seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


@dataclass(frozen=True)
class PlaneSpec:
    """Rectangle ``center + a*u_axis + b*v_axis`` with |a| <= half_u, |b| <= half_v."""

    center: tuple
    u_axis: tuple
    v_axis: tuple
    half_u: float
    half_v: float
    n_points: int = 1000

    @property
    def normal(self):
        n = np.cross(self.u_axis, self.v_axis)
        return canonical_sign(n / np.linalg.norm(n))

    @property
    def offset(self):
        return -float(self.normal @ np.asarray(self.center, dtype=float))

    @property
    def area(self):
        return 4.0 * self.half_u * self.half_v * np.linalg.norm(self.u_axis) * np.linalg.norm(self.v_axis)

    def sample(self, n, rng):
        a = rng.uniform(-self.half_u, self.half_u, n)
        b = rng.uniform(-self.half_v, self.half_v, n)
        u = np.asarray(self.u_axis, dtype=float)
        v = np.asarray(self.v_axis, dtype=float)
        return np.asarray(self.center, dtype=float) + a[:, None] * u + b[:, None] * v

    def distance(self, points):
        """Euclidean distance from points to the rectangle."""
        u = np.asarray(self.u_axis, dtype=float)
        v = np.asarray(self.v_axis, dtype=float)
        u_n, v_n = u / np.linalg.norm(u), v / np.linalg.norm(v)
        d = np.asarray(points, dtype=float) - np.asarray(self.center, dtype=float)
        a = np.clip(d @ u_n, -self.half_u * np.linalg.norm(u), self.half_u * np.linalg.norm(u))
        b = np.clip(d @ v_n, -self.half_v * np.linalg.norm(v), self.half_v * np.linalg.norm(v))
        return np.linalg.norm(d - a[:, None] * u_n - b[:, None] * v_n, axis=1)


def camera_pose(center, heading_deg) -> Pose:
    """World-to-camera pose of a level camera (world z up) looking along ``heading``."""
    h = np.radians(heading_deg)
    forward = np.array([np.cos(h), np.sin(h), 0.0])
    right = np.array([np.sin(h), -np.cos(h), 0.0])
    down = np.array([0.0, 0.0, -1.0])
    R_cw = np.column_stack([right, down, forward])
    return Pose(R_cw, np.asarray(center, dtype=float)).inverse()


@dataclass(frozen=True)
class SceneConfig:
    planes: tuple
    waypoints: tuple            # (x, y, z, heading_deg) camera centers
    n_frames: int
    n_landmarks: int
    on_plane_fraction: float = 0.6
    free_regions: tuple = ()    # ((xmin, ymin, zmin), (xmax, ymax, zmax)) boxes
    free_margin: float = 1.0
    sigma_map: float = 0.01
    sigma_px: float = 1.0
    seed: int = 0
    camera: CameraIntrinsics = KITTI_LIKE_CAMERA
    image_size: tuple = (1240, 376)
    min_depth: float = 1.0
    max_depth: float = 30.0
    min_visible: int = 10
    outlier_rate: float = 0.0
    name: str = "custom"

    def validate(self):
        if not self.waypoints or self.n_frames < 1:
            raise InvalidConfig("empty trajectory")
        if self.n_landmarks < 1:
            raise InvalidConfig("scene needs landmarks")
        for f in (self.on_plane_fraction, self.outlier_rate):
            if not 0.0 <= f <= 1.0:
                raise InvalidConfig("fractions must lie in [0, 1]")
        if self.sigma_map < 0 or self.sigma_px < 0:
            raise InvalidConfig("noise levels must be non-negative")
        if self.on_plane_fraction < 1.0 and not self.free_regions:
            raise InvalidConfig("free landmarks need at least one free region")
        if self.on_plane_fraction > 0.0 and not self.planes:
            raise InvalidConfig("on-plane landmarks need planes")


@dataclass(eq=False)
class Scene:
    config: SceneConfig
    cloud: PointCloud
    planes: list            # ground-truth Plane list, ids 0..n-1
    poses: list             # world-to-camera ground truth, one per frame
    landmarks: list         # true positions with true plane assignment
    observations: list
    support: dict = field(default_factory=dict)   # plane id -> sampled map points

    def plane_map(self) -> PlaneMap:
        """Ground-truth planes with their sampled points as the support index."""
        return PlaneMap(list(self.planes), dict(self.support))

    @property
    def camera(self):
        return self.config.camera

    def observations_for(self, frame_id):
        return [o for o in self.observations if o.frame_id == frame_id]


def interpolate_waypoints(waypoints, n_frames):
    wp = np.asarray(waypoints, dtype=float).reshape(-1, 4)
    if len(wp) == 1 or n_frames == 1:
        return [camera_pose(wp[0, :3], wp[0, 3])] * n_frames
    seg = np.linalg.norm(np.diff(wp[:, :3], axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        s = np.arange(len(wp), dtype=float)
    targets = np.linspace(0.0, s[-1], n_frames)
    poses = []
    for st in targets:
        c = np.array([np.interp(st, s, wp[:, i]) for i in range(4)])
        poses.append(camera_pose(c[:3], c[3]))
    return poses


def _unique_planes(specs):
    planes, keys = [], []
    for spec in specs:
        n, b = spec.normal, spec.offset
        if any(np.allclose(n, kn, atol=1e-9) and abs(b - kb) < 1e-9 for kn, kb in keys):
            continue
        keys.append((n, b))
        planes.append(Plane(n, b, len(planes), spec.n_points, 0.0))
    return planes


def _plane_index(planes, spec):
    for p in planes:
        if np.allclose(p.normal, spec.normal, atol=1e-9) and abs(p.offset - spec.offset) < 1e-9:
            return p.id
    raise KeyError(spec)


def _truncated_noise(rng, shape, sigma, limit):
    """Isotropic Gaussian vectors redrawn until their norm is within ``limit``."""
    out = rng.normal(0.0, sigma, size=shape)
    if sigma == 0:
        return out
    bad = np.linalg.norm(out.reshape(shape[0], -1), axis=1) > limit
    while np.any(bad):
        out[bad] = rng.normal(0.0, sigma, size=(int(bad.sum()),) + shape[1:])
        bad = np.linalg.norm(out.reshape(shape[0], -1), axis=1) > limit
    return out


def generate_scene(cfg: SceneConfig) -> Scene:
    cfg.validate()
    map_rng = sub_rng(cfg.seed, "map")
    lm_rng = sub_rng(cfg.seed, "landmarks")
    noise_rng = sub_rng(cfg.seed, "pixel_noise")

    chunks = []
    for spec in cfg.planes:
        pts = spec.sample(spec.n_points, map_rng)
        chunks.append(pts + map_rng.normal(0.0, cfg.sigma_map, size=pts.shape))
    cloud = PointCloud(np.concatenate(chunks) if chunks else np.zeros((0, 3)))
    planes = _unique_planes(cfg.planes)
    support = {}
    for spec, pts in zip(cfg.planes, chunks):
        pid = _plane_index(planes, spec)
        support[pid] = np.concatenate([support[pid], pts]) if pid in support else pts

    n_on = int(round(cfg.n_landmarks * cfg.on_plane_fraction)) if cfg.planes else 0
    landmarks = []
    if n_on:
        areas = np.array([s.area for s in cfg.planes])
        which = lm_rng.choice(len(cfg.planes), size=n_on, p=areas / areas.sum())
        for i in range(n_on):
            spec = cfg.planes[which[i]]
            p = spec.sample(1, lm_rng)[0] + lm_rng.uniform(-cfg.sigma_map, cfg.sigma_map) * spec.normal
            landmarks.append(Landmark(i, p, _plane_index(planes, spec)))
    n_free = cfg.n_landmarks - n_on
    if n_free:
        lo = np.array([r[0] for r in cfg.free_regions], dtype=float)
        hi = np.array([r[1] for r in cfg.free_regions], dtype=float)
        vol = np.prod(hi - lo, axis=1)
        while len(landmarks) < cfg.n_landmarks:
            b = lm_rng.choice(len(vol), p=vol / vol.sum())
            p = lm_rng.uniform(lo[b], hi[b])
            if all(s.distance(p[None])[0] >= cfg.free_margin for s in cfg.planes):
                landmarks.append(Landmark(len(landmarks), p, None))

    poses = interpolate_waypoints(cfg.waypoints, cfg.n_frames)
    k = cfg.camera
    X = np.array([lm.position for lm in landmarks])
    width, height = cfg.image_size
    limit = 4.0 * cfg.sigma_px
    observations = []
    for f, pose in enumerate(poses):
        pc = pose.apply(X)
        z = pc[:, 2]
        ok = (z >= cfg.min_depth) & (z <= cfg.max_depth)
        zs = np.where(ok, z, 1.0)
        uv = np.stack([k.fx * pc[:, 0] / zs + k.cx, k.fy * pc[:, 1] / zs + k.cy], axis=1)
        ok &= (uv[:, 0] >= 0) & (uv[:, 0] < width) & (uv[:, 1] >= 0) & (uv[:, 1] < height)
        idx = np.flatnonzero(ok)
        if len(idx) < cfg.min_visible:
            raise InvalidConfig(f"frame {f} sees {len(idx)} landmarks, fewer than {cfg.min_visible}")
        noise = _truncated_noise(noise_rng, (len(idx), 2), cfg.sigma_px, limit)
        # right-image pixel noise enters the disparity as a second independent draw
        right = _truncated_noise(noise_rng, (len(idx), 1), cfg.sigma_px, limit)[:, 0]
        outlier = noise_rng.uniform(size=len(idx)) < cfg.outlier_rate
        fake = noise_rng.uniform([0, 0], [width, height], size=(len(idx), 2))
        for j, i in enumerate(idx):
            pix = uv[i] + noise[j]
            if outlier[j]:
                pix = fake[j]
            disp = k.fx * k.baseline / z[i] + noise[j, 0] - right[j]
            observations.append(Observation(f, landmarks[i].id, pix, float(disp) if disp > 0.1 else None))
    return Scene(cfg, cloud, planes, poses, landmarks, observations, support)


# presets -----------------------------------------------------------------

FLOOR_Z = -1.6
CEILING_Z = 3.0


def _wall_x(x, y0, y1, density):
    h = (CEILING_Z - FLOOR_Z) / 2
    return PlaneSpec((x, (y0 + y1) / 2, FLOOR_Z + h), (0, 1, 0), (0, 0, 1), (y1 - y0) / 2, h,
                     int(density * (y1 - y0) * 2 * h))


def _wall_y(y, x0, x1, density):
    h = (CEILING_Z - FLOOR_Z) / 2
    return PlaneSpec(((x0 + x1) / 2, y, FLOOR_Z + h), (1, 0, 0), (0, 0, 1), (x1 - x0) / 2, h,
                     int(density * (x1 - x0) * 2 * h))


def _floor(x0, x1, y0, y1, density):
    return PlaneSpec(((x0 + x1) / 2, (y0 + y1) / 2, FLOOR_Z), (1, 0, 0), (0, 1, 0),
                     (x1 - x0) / 2, (y1 - y0) / 2, int(density * (x1 - x0) * (y1 - y0)))


def orthogonal3_config(seed=0, sigma_map=0.01, sigma_px=1.0, n_points=5000) -> SceneConfig:
    planes = (
        PlaneSpec((0, 5, 5), (0, 1, 0), (0, 0, 1), 5, 5, n_points),
        PlaneSpec((5, 0, 5), (1, 0, 0), (0, 0, 1), 5, 5, n_points),
        PlaneSpec((5, 5, 0), (1, 0, 0), (0, 1, 0), 5, 5, n_points),
    )
    waypoints = ((9, 4, 2, np.degrees(np.arctan2(-4, -9))), (4, 9, 2, np.degrees(np.arctan2(-9, -4))))
    return SceneConfig(planes, waypoints, 20, 200, on_plane_fraction=0.7,
                       free_regions=(((0.5, 0.5, 0.5), (9.0, 9.0, 6.0)),), free_margin=0.5,
                       sigma_map=sigma_map, sigma_px=sigma_px, seed=seed, name="orthogonal3")


def corridor_config(seed=0, sigma_map=0.01, sigma_px=1.0, n_frames=50, n_landmarks=300,
                    density=20.0) -> SceneConfig:
    planes = (_wall_y(-4.0, -5.0, 60.0, density), _wall_y(4.0, -5.0, 60.0, density),
              _floor(-5.0, 60.0, -4.0, 4.0, density))
    waypoints = ((0, 0, 0, 0.0), (49, 0, 0, 0.0))
    return SceneConfig(planes, waypoints, n_frames, n_landmarks, on_plane_fraction=0.6,
                       free_regions=(((-5.0, -3.0, -0.6), (60.0, 3.0, 2.0)),), free_margin=1.0,
                       sigma_map=sigma_map, sigma_px=sigma_px, seed=seed, name="corridor")


def turn_config(seed=0, sigma_map=0.01, sigma_px=1.0, n_frames=50, n_landmarks=700,
                density=20.0) -> SceneConfig:
    """L-shaped corridor: 20 m east, a 90 degree left turn of radius 4 m, 20 m north."""
    planes = (
        _wall_y(-4.0, -5.0, 28.0, density),
        _wall_y(4.0, -5.0, 20.0, density),
        _wall_x(28.0, -4.0, 36.0, density),
        _wall_x(20.0, 4.0, 36.0, density),
        _floor(-5.0, 28.0, -4.0, 4.0, density),
        _floor(20.0, 28.0, 4.0, 36.0, density),
    )
    arc = [(20 + 4 * np.cos(a), 4 + 4 * np.sin(a), 0.0, np.degrees(a) + 90.0)
           for a in np.linspace(-np.pi / 2, 0.0, 10)]
    waypoints = ((0.0, 0.0, 0.0, 0.0), *arc, (24.0, 24.0, 0.0, 90.0))
    free = (((-5.0, -3.0, -0.6), (28.0, 3.0, 2.0)), ((21.0, 3.0, -0.6), (27.0, 36.0, 2.0)))
    return SceneConfig(planes, waypoints, n_frames, n_landmarks, on_plane_fraction=0.6,
                       free_regions=free, free_margin=1.0, sigma_map=sigma_map, sigma_px=sigma_px,
                       seed=seed, name="turn")


PRESETS = {"orthogonal3": orthogonal3_config, "corridor": corridor_config, "turn": turn_config}


def preset(name: str, seed: int = 0, **overrides) -> SceneConfig:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise InvalidConfig(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(seed=seed, **overrides)


def brute_force_pose(k: CameraIntrinsics, landmarks, observations, center: Pose,
                     span: float, steps: int, chunk: int = 20000) -> Pose:
    """Exhaustive search over ``center @ exp(dxi)`` with each twist component on a grid.

    Landmarks are fixed; the cost is the information-weighted reprojection
    error of visible observations. Only meant for tiny problems.
    """
    if span == 0 or steps <= 1:
        return center
    pos = {lm.id: lm.position for lm in landmarks}
    X = np.array([pos[o.landmark_id] for o in observations])
    uv = np.array([o.pixel for o in observations])
    info = np.array([o.info_weight for o in observations])
    axis = np.linspace(-span, span, steps)
    grid = np.stack(np.meshgrid(*([axis] * 6), indexing="ij"), axis=-1).reshape(-1, 6)
    best_cost, best = np.inf, None
    for s in range(0, len(grid), chunk):
        dR, dt = se3_exp_batch(grid[s:s + chunk])
        R = center.rotation @ dR
        t = np.einsum("ij,nj->ni", center.rotation, dt) + center.translation
        pc = np.einsum("nij,mj->nmi", R, X) + t[:, None, :]
        z = pc[..., 2]
        vis = z > 1e-6
        zs = np.where(vis, z, 1.0)
        proj = np.stack([k.fx * pc[..., 0] / zs + k.cx, k.fy * pc[..., 1] / zs + k.cy], axis=-1)
        r = uv[None] - proj
        c = np.einsum("nmi,mij,nmj->nm", r, info, r)
        cost = np.where(vis, c, 0.0).sum(axis=1)
        i = int(np.argmin(cost))
        if cost[i] < best_cost:
            best_cost, best = float(cost[i]), (R[i], t[i])
    return Pose(*best)
