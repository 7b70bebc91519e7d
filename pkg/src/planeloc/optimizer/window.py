from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..geometry import rotation_angle
from .graph import FactorGraph


@dataclass
class SlidingWindow:
    """FIFO window of frame ids; the oldest active frame is the fixed gauge anchor.

    With ``adaptive`` set, an inter-frame rotation above ``boost_angle_deg``
    raises the capacity by ``boost`` for the next ``capacity`` insertions.
    """

    capacity: int = 10
    frames: list = field(default_factory=list)
    adaptive: bool = False
    boost: int = 5
    boost_angle_deg: float = 15.0
    boost_remaining: int = 0

    def __post_init__(self):
        if self.capacity < 2:
            raise ValueError("window capacity must be at least 2")

    @property
    def effective_capacity(self):
        return self.capacity + (self.boost if self.boost_remaining > 0 else 0)

    @property
    def anchor(self):
        return self.frames[0] if self.frames else None

    def copy(self):
        return replace(self, frames=list(self.frames))


def drop_frames(graph: FactorGraph, dropped) -> FactorGraph:
    """Remove frames, their observations, and landmarks left without observations."""
    dropped = set(dropped)
    g = graph.copy()
    for f in dropped:
        g.poses.pop(f, None)
        g.fixed_poses.discard(f)
    g.observations = [o for o in g.observations if o.frame_id not in dropped]
    seen = {o.landmark_id for o in g.observations}
    for lid in [l for l in g.landmarks if l not in seen]:
        del g.landmarks[lid]
        g.fixed_landmarks.discard(lid)
    g.plane_factors = [f for f in g.plane_factors if f.landmark_id in g.landmarks]
    return g


def window_update(window: SlidingWindow, frame_id: int, graph: FactorGraph):
    """Insert ``frame_id`` (already posed in ``graph``) and enforce the capacity."""
    if frame_id in window.frames:
        raise ValueError(f"frame {frame_id} already in window")
    if frame_id not in graph.poses:
        raise ValueError(f"frame {frame_id} has no pose in the graph")
    w = window.copy()
    if w.boost_remaining > 0:
        w.boost_remaining -= 1
    if w.adaptive and w.frames:
        prev = graph.poses[w.frames[-1]]
        cur = graph.poses[frame_id]
        turn = np.degrees(rotation_angle(cur.rotation @ prev.rotation.T))
        if turn > w.boost_angle_deg:
            w.boost_remaining = w.capacity
    w.frames.append(frame_id)
    dropped = []
    while len(w.frames) > w.effective_capacity:
        dropped.append(w.frames.pop(0))
    g = drop_frames(graph, dropped) if dropped else graph.copy()
    g.fixed_poses = {w.frames[0]}
    return w, g
