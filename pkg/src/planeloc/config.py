"""Run configuration: one flat ``key = value`` file covering every tunable.

Precedence is built-in defaults, then the config file, then command-line
overrides. Unknown keys and invalid values raise InvalidConfig at load time.
"""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .errors import InvalidConfig
from .geometry import CameraIntrinsics
from .optimizer.graph import LmConfig
from .optimizer.localize import LocalizerConfig
from .plane_map import PlaneMapParams
from .tensor_voting import VotingParams


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    workers: int = 1

    # camera
    fx: float = 700.0
    fy: float = 700.0
    cx: float = 620.0
    cy: float = 188.0
    baseline: float = 0.54

    # tensor voting
    voting_sigma: float = 0.5
    voting_radius: float = 1.0
    min_neighbors: int = 3
    ball_dominance: float = 1.0

    # plane extraction
    k: int = 6
    kmeans_max_iters: int = 100
    split_gap: float = 0.5
    min_support: int = 50
    max_normal_angle: float = 15.0
    inlier_thresh: float = 0.1
    support_voxel: float = 0.1

    # localization
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

    # Levenberg-Marquardt
    lm_initial_damping: float = 1e-3
    lm_damping_up: float = 10.0
    lm_damping_down: float = 0.1
    lm_max_iters: int = 50
    lm_cost_tol: float = 1e-12
    lm_step_tol: float = 1e-12
    lm_grad_tol: float = 1e-9
    lm_min_damping: float = 1e-9
    lm_max_damping: float = 1e10

    # simulation
    sim_sigma_map: float = 0.01
    sim_sigma_px: float = 1.0

    # evaluation
    mode: str = "planar"
    align: bool = False

    def __post_init__(self):
        self.validate()

    # derived module configurations --------------------------------------
    def camera(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy, self.baseline)

    def voting(self) -> VotingParams:
        return VotingParams(self.voting_sigma, self.voting_radius, self.min_neighbors, self.ball_dominance)

    def plane_map(self) -> PlaneMapParams:
        return PlaneMapParams(k=self.k, seed=sub_seed(self.seed, "kmeans"),
                              kmeans_max_iters=self.kmeans_max_iters, split_gap=self.split_gap,
                              min_support=self.min_support, max_normal_angle=self.max_normal_angle,
                              inlier_thresh=self.inlier_thresh)

    def lm(self) -> LmConfig:
        return LmConfig(initial_damping=self.lm_initial_damping, damping_up=self.lm_damping_up,
                        damping_down=self.lm_damping_down, max_iters=self.lm_max_iters,
                        cost_tol=self.lm_cost_tol, step_tol=self.lm_step_tol,
                        max_damping=self.lm_max_damping, min_damping=self.lm_min_damping,
                        grad_tol=self.lm_grad_tol)

    def localizer(self) -> LocalizerConfig:
        return LocalizerConfig(
            lambda_weight=self.lambda_weight, sigma_px=self.sigma_px, sigma_plane=self.sigma_plane,
            window=self.window, adaptive_window=self.adaptive_window, window_boost=self.window_boost,
            boost_angle_deg=self.boost_angle_deg, min_obs=self.min_obs,
            min_landmark_obs=self.min_landmark_obs, anchor_frames=self.anchor_frames,
            dist_thresh=self.dist_thresh, angle_thresh=self.angle_thresh,
            support_radius=self.support_radius, prune_associations=self.prune_associations,
            max_depth=self.max_depth, disparity_epsilon=self.disparity_epsilon,
            depth_epsilon=self.depth_epsilon, lm=self.lm())

    def validate(self):
        checks = [
            (self.workers >= 1, "workers must be at least 1"),
            (0.0 <= self.lambda_weight <= 1.0, "lambda_weight must lie in [0, 1]"),
            (self.sigma_px > 0 and self.sigma_plane > 0, "sigma_px and sigma_plane must be positive"),
            (self.window >= 2, "window must be at least 2"),
            (1 <= self.anchor_frames < self.window, "anchor_frames must lie in [1, window)"),
            (self.k >= 1, "k must be at least 1"),
            (self.min_support >= 3, "min_support must be at least 3"),
            (self.dist_thresh > 0 and self.support_radius > 0, "association thresholds must be positive"),
            (0 < self.angle_thresh <= 90 and 0 < self.max_normal_angle <= 90, "angles must lie in (0, 90]"),
            (self.min_obs >= 1 and self.min_landmark_obs >= 1, "observation minimums must be positive"),
            (self.sim_sigma_map >= 0 and self.sim_sigma_px >= 0, "simulation noise must be non-negative"),
            (self.mode in ("planar", "spatial"), "mode must be planar or spatial"),
            (self.seed >= 0, "seed must be non-negative"),
        ]
        for ok, message in checks:
            if not ok:
                raise InvalidConfig(message)
        try:
            self.camera()
            self.voting()
            self.localizer()
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from exc

    # serialization ------------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, **overrides) -> "RunConfig":
        overrides = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(overrides) - {f.name for f in fields(self)}
        if unknown:
            raise InvalidConfig(f"unknown config keys: {', '.join(sorted(unknown))}")
        return replace(self, **{k: _coerce(k, v) for k, v in overrides.items()})

    def as_dict(self):
        return asdict(self)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = _TYPES[key]
    if not isinstance(value, str):
        if kind == "float" and isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        return value
    text = value.strip()
    try:
        if kind == "bool":
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            v = float(text)
            if not np.isfinite(v):
                raise ValueError(text)
            return v
        return text
    except ValueError:
        raise InvalidConfig(f"{key}: cannot parse {value!r} as {kind}") from None


def parse_config(text: str, base: RunConfig = RunConfig(), source: str = "<config>") -> RunConfig:
    """Apply ``key = value`` lines from ``text`` on top of ``base``."""
    values = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise InvalidConfig(f"{source}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise InvalidConfig(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return base.with_overrides(**values)


def load_config(path, base: RunConfig = RunConfig()) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base, str(path))


def sub_seed(seed: int, name: str) -> int:
    """Independent 32-bit seed for the module ``name``, derived from the run seed."""
    return int(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]).generate_state(1)[0])
