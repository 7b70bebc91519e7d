"""Per-point structure tensors over a LiDAR cloud and stick/plate/ball labels."""
from __future__ import annotations

import enum
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .errors import EmptyResult, InsufficientNeighbors

EIGEN_FLOOR = -1e-9


class Saliency(enum.Enum):
    STICK = "stick"
    PLATE = "plate"
    BALL = "ball"


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class VotingParams:
    sigma: float = 0.5
    radius: float = 1.0
    min_neighbors: int = 3
    ball_dominance: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.radius > 0):
            raise ValueError("sigma and radius must be positive")
        if self.min_neighbors < 3:
            raise ValueError("min_neighbors must be at least 3")


@dataclass(frozen=True, eq=False)
class PointTensor:
    tensor: np.ndarray
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns e1, e2, e3

    @classmethod
    def from_tensor(cls, tensor):
        vals, vecs = eigh_descending(np.asarray(tensor, dtype=float)[None])
        return cls(np.asarray(tensor, dtype=float), vals[0], vecs[0])

    def components(self):
        """Stick, plate and ball parts; they sum back to the tensor."""
        l1, l2, l3 = self.eigenvalues
        e = self.eigenvectors
        o1 = np.outer(e[:, 0], e[:, 0])
        o2 = np.outer(e[:, 1], e[:, 1])
        o3 = np.outer(e[:, 2], e[:, 2])
        return (l1 - l2) * o1, (l2 - l3) * (o1 + o2), l3 * (o1 + o2 + o3)


@dataclass(frozen=True, eq=False)
class SaliencyLabel:
    kind: Saliency
    orientation: np.ndarray


def decay(d, sigma):
    """Voting kernel weight for squared distance ``d``."""
    return np.exp(-np.asarray(d, dtype=float) / (sigma * sigma))


def eigh_descending(tensors):
    """Batched symmetric eigendecomposition, eigenvalues sorted high to low."""
    vals, vecs = np.linalg.eigh(tensors)
    return vals[..., ::-1], vecs[..., ::-1]


def canonical_sign(v):
    """Flip vectors so their largest-magnitude component is positive."""
    v = np.asarray(v, dtype=float)
    idx = np.argmax(np.abs(v), axis=-1)
    s = np.take_along_axis(v, idx[..., None], axis=-1)
    return np.where(s < 0, -v, v)


class VoxelGrid:
    """Uniform hash grid for fixed-radius neighbor queries (cell size = radius)."""

    def __init__(self, points, cell):
        self.points = np.ascontiguousarray(points, dtype=float)
        self.cell = float(cell)
        ijk = np.floor(self.points / self.cell).astype(np.int64)
        self.origin = ijk.min(axis=0) - 1
        self.dims = ijk.max(axis=0) - self.origin + 2
        keys = self.key(ijk)
        self.order = np.argsort(keys, kind="stable")
        self.cell_keys, self.cell_start, self.cell_count = np.unique(
            keys[self.order], return_index=True, return_counts=True)
        self.ijk = ijk
        self.sorted_points = self.points[self.order]

    def key(self, ijk):
        rel = ijk - self.origin
        return (rel[..., 0] * self.dims[1] + rel[..., 1]) * self.dims[2] + rel[..., 2]

    def neighbors(self, index, radius):
        """Indices within ``radius`` of point ``index``, itself excluded, in grid order."""
        out = []
        p = self.points[index]
        for off in itertools.product((-1, 0, 1), repeat=3):
            key = self.key(self.ijk[index] + np.array(off))
            pos = np.searchsorted(self.cell_keys, key)
            if pos < len(self.cell_keys) and self.cell_keys[pos] == key:
                s, c = self.cell_start[pos], self.cell_count[pos]
                for j in self.order[s:s + c]:
                    if j != index and np.sum((self.points[j] - p) ** 2) <= radius * radius:
                        out.append(int(j))
        return np.array(out, dtype=np.int64)


@numba.njit(cache=True, nogil=True)
def _vote_kernel(query, points, sorted_points, order, ijk, origin, dims,
                 cell_keys, cell_start, cell_count, radius, sigma, out, counts):
    r2 = radius * radius
    s2 = sigma * sigma
    for qi in range(query.shape[0]):
        q = query[qi]
        px, py, pz = points[q, 0], points[q, 1], points[q, 2]
        acc = np.zeros(6)
        wsum = 0.0
        n = 0
        for dx in range(-1, 2):
            for dy in range(-1, 2):
                for dz in range(-1, 2):
                    key = ((ijk[q, 0] + dx - origin[0]) * dims[1]
                           + (ijk[q, 1] + dy - origin[1])) * dims[2] + (ijk[q, 2] + dz - origin[2])
                    pos = np.searchsorted(cell_keys, key)
                    if pos >= cell_keys.shape[0] or cell_keys[pos] != key:
                        continue
                    for slot in range(cell_start[pos], cell_start[pos] + cell_count[pos]):
                        if order[slot] == q:
                            continue
                        ex = sorted_points[slot, 0] - px
                        ey = sorted_points[slot, 1] - py
                        ez = sorted_points[slot, 2] - pz
                        d2 = ex * ex + ey * ey + ez * ez
                        if d2 > r2:
                            continue
                        w = np.exp(-d2 / s2)
                        acc[0] += w * ex * ex
                        acc[1] += w * ex * ey
                        acc[2] += w * ex * ez
                        acc[3] += w * ey * ey
                        acc[4] += w * ey * ez
                        acc[5] += w * ez * ez
                        wsum += w
                        n += 1
        counts[qi] = n
        if wsum > 0.0:
            for c in range(6):
                acc[c] /= wsum
        out[qi, 0, 0] = acc[0]
        out[qi, 0, 1] = acc[1]
        out[qi, 1, 0] = acc[1]
        out[qi, 0, 2] = acc[2]
        out[qi, 2, 0] = acc[2]
        out[qi, 1, 1] = acc[3]
        out[qi, 1, 2] = acc[4]
        out[qi, 2, 1] = acc[4]
        out[qi, 2, 2] = acc[5]


def _tensors_for(grid, idx, params):
    """Weighted offset covariance for each index in ``idx``; returns (tensors, counts)."""
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    out = np.zeros((len(idx), 3, 3))
    counts = np.zeros(len(idx), dtype=np.int64)
    _vote_kernel(idx, grid.points, grid.sorted_points, grid.order, grid.ijk, grid.origin,
                 grid.dims, grid.cell_keys, grid.cell_start.astype(np.int64),
                 grid.cell_count.astype(np.int64), float(params.radius), float(params.sigma),
                 out, counts)
    return out, counts


def accumulate_tensor(index: int, cloud: PointCloud, params: VotingParams) -> PointTensor:
    grid = VoxelGrid(cloud.points, params.radius)
    T, counts = _tensors_for(grid, np.array([index]), params)
    if counts[0] < params.min_neighbors:
        raise InsufficientNeighbors(f"point {index} has {counts[0]} neighbors within {params.radius} m")
    return PointTensor.from_tensor(T[0])


def classify_eigenvalues(eigenvalues, ball_dominance=1.0):
    """Vectorized saliency rules over an (n, 3) array of descending eigenvalues."""
    ev = np.asarray(eigenvalues, dtype=float).reshape(-1, 3)
    stick_sal = ev[:, 0] - ev[:, 1]
    plate_sal = ev[:, 1] - ev[:, 2]
    ball_sal = ball_dominance * ev[:, 2]
    stick = (stick_sal >= plate_sal) & (stick_sal >= ball_sal)
    plate = ~stick & (plate_sal >= stick_sal) & (plate_sal >= ball_sal)
    kinds = np.full(len(ev), 2, dtype=np.int8)
    kinds[plate] = 1
    kinds[stick] = 0
    return kinds


_KINDS = (Saliency.STICK, Saliency.PLATE, Saliency.BALL)


def classify(t: PointTensor, ball_dominance: float = 1.0) -> SaliencyLabel:
    kind = _KINDS[int(classify_eigenvalues(t.eigenvalues, ball_dominance)[0])]
    if kind is Saliency.STICK:
        return SaliencyLabel(kind, canonical_sign(t.eigenvectors[:, 0]))
    if kind is Saliency.PLATE:
        return SaliencyLabel(kind, canonical_sign(t.eigenvectors[:, 2]))
    return SaliencyLabel(kind, np.zeros(3))


@dataclass(frozen=True, eq=False)
class CloudLabels:
    """Column-oriented labels for the points that had enough neighbors."""

    indices: np.ndarray
    kinds: np.ndarray  # 0 stick, 1 plate, 2 ball
    orientations: np.ndarray
    eigenvalues: np.ndarray

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        for i, k, o in zip(self.indices, self.kinds, self.orientations):
            yield int(i), SaliencyLabel(_KINDS[int(k)], o)

    @property
    def plate_mask(self):
        return self.kinds == 1


def label_cloud(cloud: PointCloud, params: VotingParams = VotingParams(), workers: int = 1,
                require_plate: bool = True) -> CloudLabels:
    """Label every point with at least ``min_neighbors`` neighbors.

    Plate points carry their surface normal. Raises EmptyResult when no point
    is a plate and ``require_plate`` is set. Each point's tensor is reduced
    independently, so the result does not depend on ``workers``.
    """
    pts = cloud.points
    if len(pts) == 0:
        raise EmptyResult("no points")
    grid = VoxelGrid(pts, params.radius)
    if workers > 1:
        blocks = np.array_split(np.arange(len(pts)), workers)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(lambda b: _tensors_for(grid, b, params), blocks))
        T = np.concatenate([r[0] for r in results])
        counts = np.concatenate([r[1] for r in results])
    else:
        T, counts = _tensors_for(grid, np.arange(len(pts)), params)
    ok = counts >= params.min_neighbors
    idx = np.flatnonzero(ok)
    vals, vecs = eigh_descending(T[ok])
    kinds = classify_eigenvalues(vals, params.ball_dominance)
    orient = np.zeros((len(idx), 3))
    orient[kinds == 0] = canonical_sign(vecs[kinds == 0, :, 0])
    orient[kinds == 1] = canonical_sign(vecs[kinds == 1, :, 2])
    labels = CloudLabels(idx, kinds, orient, vals)
    if require_plate and not np.any(kinds == 1):
        raise EmptyResult("no plate points in cloud")
    return labels
