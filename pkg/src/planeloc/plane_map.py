"""Plane extraction from plate-labelled map points and point-to-plane association."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometry, EmptyResult
from .tensor_voting import PointCloud, VotingParams, canonical_sign, label_cloud

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Plane:
    """Plane ``normal . x + offset = 0`` with a unit normal."""

    normal: np.ndarray
    offset: float
    id: int = -1
    support_count: int = 0
    rms: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float).reshape(3))
        object.__setattr__(self, "offset", float(self.offset))

    def signed_distance(self, points):
        return (np.asarray(points, dtype=float) @ self.normal + self.offset) / np.linalg.norm(self.normal)

    def with_id(self, plane_id):
        return Plane(self.normal, self.offset, plane_id, self.support_count, self.rms)


@dataclass
class PlaneMap:
    planes: list = field(default_factory=list)
    support: dict = field(default_factory=dict)  # plane id -> (n, 3) supporting points

    def __post_init__(self):
        ids = [p.id for p in self.planes]
        if len(set(ids)) != len(ids):
            raise ValueError("plane ids must be unique")
        self._by_id = {p.id: p for p in self.planes}
        self._trees = {pid: cKDTree(pts) for pid, pts in self.support.items() if len(pts)}

    def __len__(self):
        return len(self.planes)

    def __getitem__(self, plane_id) -> Plane:
        return self._by_id[plane_id]

    def has_support(self, plane_id):
        return plane_id in self._trees

    def near_support(self, plane_id, point, radius):
        tree = self._trees.get(plane_id)
        if tree is None:
            return True
        d, _ = tree.query(point, k=1, distance_upper_bound=radius)
        return bool(np.isfinite(d))


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    objective: list  # after every update step
    iterations: int
    warning: bool = False

    @property
    def clusters(self):
        return [(self.centroids[c], np.flatnonzero(self.labels == c)) for c in range(len(self.centroids))]


def _kmeanspp(x, k, rng):
    centers = [x[rng.integers(len(x))]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            i = rng.integers(len(x))
        else:
            i = rng.choice(len(x), p=d2 / total)
        centers.append(x[i])
        d2 = np.minimum(d2, np.sum((x - x[i]) ** 2, axis=1))
    return np.array(centers)


def _normalize_rows(c):
    n = np.linalg.norm(c, axis=1, keepdims=True)
    return np.where(n > 0, c / np.where(n > 0, n, 1.0), c)


def kmeans_normals(normals, k: int, seed: int = 0, max_iters: int = 100) -> KMeansResult:
    """Lloyd's k-means on unit normals with unit-length centroids.

    Empty clusters are reseeded to the point farthest from its centroid; after
    three reseeds the current state is returned with ``warning`` set.
    """
    x = np.asarray(normals, dtype=float).reshape(-1, 3)
    if k < 1 or len(x) == 0:
        raise ValueError("need k >= 1 and at least one normal")
    rng = np.random.default_rng(seed)
    centroids = _normalize_rows(_kmeanspp(x, k, rng))
    labels = np.full(len(x), -1)
    objective = []
    reseeds = 0
    warning = False
    it = 0
    for it in range(1, max_iters + 1):
        d2 = np.sum((x[:, None, :] - centroids[None]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)
        counts = np.bincount(new_labels, minlength=k)
        if np.any(counts == 0):
            if reseeds >= 3:
                warning = True
                labels = new_labels
                break
            own = d2[np.arange(len(x)), new_labels]
            for c in np.flatnonzero(counts == 0):
                far = int(np.argmax(own))
                centroids[c] = x[far]
                own[far] = -1.0
                reseeds += 1
            continue
        changed = not np.array_equal(new_labels, labels)
        labels = new_labels
        sums = np.zeros((k, 3))
        np.add.at(sums, labels, x)
        centroids = _normalize_rows(sums)
        objective.append(float(np.sum((x - centroids[labels]) ** 2)))
        if not changed:
            break
    if warning:
        log.warning("k-means stopped after %d empty-cluster reseeds", reseeds)
    return KMeansResult(centroids, labels, objective, it, warning)


def split_by_offset(points, normal, gap: float = 0.5):
    """Split points sharing a normal into groups of nearby parallel planes.

    Returns index arrays into ``points``, ordered by offset.
    """
    if not gap > 0:
        raise ValueError("gap must be positive")
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        return []
    offsets = -(points @ np.asarray(normal, dtype=float))
    order = np.argsort(offsets, kind="stable")
    cuts = np.flatnonzero(np.diff(offsets[order]) > gap) + 1
    return [np.sort(g) for g in np.split(order, cuts)]


def fit_plane(points, degeneracy_ratio: float = 0.5) -> Plane:
    """Total-least-squares plane through ``points``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise DegenerateGeometry("need at least 3 points to fit a plane")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    vals, vecs = np.linalg.eigh(centered.T @ centered / len(pts))
    # ascending: vals[0] smallest
    if vals[1] <= 1e-12 * max(vals[2], 1e-300) or vals[0] > degeneracy_ratio * vals[1]:
        raise DegenerateGeometry(
            f"points are not plane-like (eigenvalues {vals[0]:.3g}, {vals[1]:.3g}, {vals[2]:.3g})")
    normal = canonical_sign(vecs[:, 0])
    offset = -float(normal @ centroid)
    rms = float(np.sqrt(np.mean((centered @ normal) ** 2)))
    return Plane(normal, offset, -1, len(pts), rms)


def _refine(points, plane, inlier_thresh, rounds=3):
    """Refit on points within ``inlier_thresh`` of the current plane."""
    keep = np.ones(len(points), dtype=bool)
    for _ in range(rounds):
        new_keep = np.abs(points @ plane.normal + plane.offset) <= inlier_thresh
        if new_keep.sum() < 3 or np.array_equal(new_keep, keep):
            break
        keep = new_keep
        plane = fit_plane(points[keep])
    return plane, keep


@dataclass(frozen=True)
class PlaneMapParams:
    k: int = 6
    seed: int = 0
    kmeans_max_iters: int = 100
    split_gap: float = 0.5
    min_support: int = 50
    max_normal_angle: float = 15.0  # degrees from the cluster centroid
    inlier_thresh: float = 0.1
    merge_angle: float = 5.0       # degrees; near-duplicate planes from split clusters are fused


def _merge_duplicates(found, params):
    """Fuse fits that describe the same plane (k larger than the number of orientations)."""
    cos_merge = np.cos(np.radians(params.merge_angle))
    merged = []
    for plane, pts in sorted(found, key=lambda item: -len(item[1])):
        for i, (other, other_pts) in enumerate(merged):
            c = float(plane.normal @ other.normal)
            offset = plane.offset if c >= 0 else -plane.offset
            if abs(c) >= cos_merge and abs(offset - other.offset) <= params.split_gap:
                union = np.concatenate([other_pts, pts])
                try:
                    fused, keep = _refine(union, fit_plane(union), params.inlier_thresh)
                except DegenerateGeometry:
                    break
                merged[i] = (fused, union[keep])
                break
        else:
            merged.append((plane, pts))
    return merged


def build_plane_map(cloud: PointCloud, voting: VotingParams = VotingParams(),
                    params: PlaneMapParams = PlaneMapParams(), workers: int = 1) -> PlaneMap:
    """Tensor voting -> plate normals -> k-means -> offset split -> plane fits."""
    if len(cloud) == 0:
        raise EmptyResult("no points")
    labels = label_cloud(cloud, voting, workers=workers)
    plate = labels.plate_mask
    idx = labels.indices[plate]
    normals = labels.orientations[plate]
    if len(idx) < params.min_support:
        raise EmptyResult(f"only {len(idx)} plate points, fewer than min_support={params.min_support}")
    km = kmeans_normals(normals, min(params.k, len(idx)), params.seed, params.kmeans_max_iters)
    cos_max = np.cos(np.radians(params.max_normal_angle))
    found = []
    for centroid, members in km.clusters:
        if len(members) < params.min_support:
            continue
        members = members[normals[members] @ centroid >= cos_max]
        pts = cloud.points[idx[members]]
        for group in split_by_offset(pts, centroid, params.split_gap):
            if len(group) < params.min_support:
                continue
            try:
                plane = fit_plane(pts[group])
                plane, keep = _refine(pts[group], plane, params.inlier_thresh)
            except DegenerateGeometry:
                continue
            if keep.sum() < params.min_support:
                continue
            found.append((plane, pts[group][keep]))
    planes, support = [], {}
    for plane, pts in _merge_duplicates(found, params):
        pid = len(planes)
        planes.append(Plane(plane.normal, plane.offset, pid, len(pts), plane.rms))
        support[pid] = pts
    if not planes:
        raise EmptyResult("no plane reached min_support")
    return PlaneMap(planes, support)


def associate(point, plane_map: PlaneMap, dist_thresh: float = 0.2,
              normal_check=None, angle_thresh: float = 15.0,
              support_radius: Optional[float] = None) -> Optional[int]:
    """Id of the nearest plane within ``dist_thresh`` whose supported patch is nearby.

    ``support_radius`` (default ``dist_thresh``) bounds the distance to the
    nearest supporting map point, which keeps points off a plane's infinite
    extension. Maps loaded without support points skip that check.
    """
    if not dist_thresh > 0:
        raise ValueError("dist_thresh must be positive")
    point = np.asarray(point, dtype=float)
    radius = dist_thresh if support_radius is None else support_radius
    cos_max = np.cos(np.radians(angle_thresh))
    best, best_d = None, np.inf
    for plane in plane_map.planes:
        d = abs(float(plane.signed_distance(point)))
        if d > dist_thresh or d >= best_d:
            continue
        if normal_check is not None:
            n = plane.normal / np.linalg.norm(plane.normal)
            if abs(float(n @ np.asarray(normal_check))) < cos_max:
                continue
        if not plane_map.near_support(plane.id, point, radius):
            continue
        best, best_d = plane.id, d
    return best
