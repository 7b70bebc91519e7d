"""Reprojection and coplanarity residuals, costs, and analytic Jacobians.

Pose increments are right-multiplied, ``T <- T exp(dxi)``, with
``dxi = (rho, phi)``; landmark increments are additive. Rows are whitened
by the square-rooted weight and information so the problem is an ordinary
least-squares one: ``cost = sum(r_scaled ** 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..geometry import DEPTH_EPSILON, Pose, hat, nearest_rotation, project, se3_exp_batch
from .graph import FactorGraph


def reprojection_residual(k, pose, landmark, obs, depth_epsilon=DEPTH_EPSILON):
    """Observed minus predicted pixel; raises NonPositiveDepth when not visible."""
    return obs.pixel - project(k, pose, landmark.position, depth_epsilon)


def plane_residual(plane, landmark):
    """Signed distance of the landmark from the plane, invariant to scaling (W, b)."""
    return float((plane.normal @ landmark.position + plane.offset) / np.linalg.norm(plane.normal))


@dataclass
class VariableOrdering:
    """Column layout: 6 per free pose, then 3 per free landmark."""

    pose_ids: list
    landmark_ids: list

    @property
    def n_pose_cols(self):
        return 6 * len(self.pose_ids)

    @property
    def size(self):
        return 6 * len(self.pose_ids) + 3 * len(self.landmark_ids)

    def pose_slice(self, frame_id):
        i = self.pose_ids.index(frame_id)
        return slice(6 * i, 6 * i + 6)

    def landmark_slice(self, landmark_id):
        i = self.landmark_ids.index(landmark_id)
        return slice(self.n_pose_cols + 3 * i, self.n_pose_cols + 3 * i + 3)


@dataclass
class Linearization:
    r_obs: np.ndarray       # (na, 2) whitened reprojection residuals
    obs_rows: np.ndarray    # indices of active observations
    J_pose: np.ndarray      # (na, 2, 6)
    J_obs_lm: np.ndarray    # (na, 2, 3)
    obs_pcol: np.ndarray    # free-pose rank or -1
    obs_lcol: np.ndarray    # free-landmark rank or -1
    r_plane: np.ndarray     # (m,)
    J_plane: np.ndarray     # (m, 3)
    plane_lcol: np.ndarray

    @property
    def cost(self):
        return float(np.sum(self.r_obs ** 2) + np.sum(self.r_plane ** 2))


class Problem:
    """Array view of a factor graph for vectorized evaluation."""

    def __init__(self, graph: FactorGraph, depth_epsilon: float = DEPTH_EPSILON):
        graph.validate()
        self.graph = graph
        self.k = graph.camera
        self.depth_epsilon = depth_epsilon
        lam = float(graph.lambda_weight)

        self.pose_ids = sorted(graph.poses)
        pidx = {f: i for i, f in enumerate(self.pose_ids)}
        self.R = np.array([graph.poses[f].rotation for f in self.pose_ids]).reshape(-1, 3, 3)
        self.t = np.array([graph.poses[f].translation for f in self.pose_ids]).reshape(-1, 3)
        free_poses = [f for f in self.pose_ids if f not in graph.fixed_poses]
        self.pose_col = np.array([free_poses.index(f) if f not in graph.fixed_poses else -1
                                  for f in self.pose_ids], dtype=np.int64)

        self.lm_ids = sorted(graph.landmarks)
        lidx = {l: i for i, l in enumerate(self.lm_ids)}
        self.X = np.array([graph.landmarks[l].position for l in self.lm_ids]).reshape(-1, 3)
        free_lms = [l for l in self.lm_ids if l not in graph.fixed_landmarks]
        rank = {l: i for i, l in enumerate(free_lms)}
        self.lm_col = np.array([rank.get(l, -1) for l in self.lm_ids], dtype=np.int64)
        self.ordering = VariableOrdering(free_poses, free_lms)

        obs = graph.observations if lam > 0 else []
        self.obs_pose = np.array([pidx[o.frame_id] for o in obs], dtype=np.int64)
        self.obs_lm = np.array([lidx[o.landmark_id] for o in obs], dtype=np.int64)
        self.uv = np.array([o.pixel for o in obs]).reshape(-1, 2)
        # S^T S = info, scaled by the mixing weight
        info = np.array([o.info_weight for o in obs]).reshape(-1, 2, 2)
        self.obs_sqrt = np.swapaxes(np.linalg.cholesky(info), 1, 2) * np.sqrt(lam)

        factors = graph.plane_factors if lam < 1 else []
        self.pf_lm = np.array([lidx[f.landmark_id] for f in factors], dtype=np.int64)
        W = np.array([graph.planes[f.plane_id].normal for f in factors]).reshape(-1, 3)
        b = np.array([graph.planes[f.plane_id].offset for f in factors])
        norm = np.linalg.norm(W, axis=1)
        self.pf_normal = W / norm[:, None] if len(W) else W
        self.pf_offset = b / norm if len(b) else b
        self.pf_sqrt = np.sqrt((1.0 - lam) * np.array([f.info_weight for f in factors]))

    @property
    def n_free(self):
        return self.ordering.size

    def _camera_points(self, R, t, X):
        return (R[self.obs_pose] @ X[self.obs_lm][:, :, None])[:, :, 0] + t[self.obs_pose]

    def residuals(self, R=None, t=None, X=None):
        """Whitened reprojection residuals of visible edges, plane residuals, visibility mask."""
        R = self.R if R is None else R
        t = self.t if t is None else t
        X = self.X if X is None else X
        pc = self._camera_points(R, t, X)
        active = pc[:, 2] > self.depth_epsilon
        z = np.where(active, pc[:, 2], 1.0)
        proj = np.stack([self.k.fx * pc[:, 0] / z + self.k.cx, self.k.fy * pc[:, 1] / z + self.k.cy], axis=1)
        r = (self.obs_sqrt @ (self.uv - proj)[:, :, None])[active, :, 0]
        rp = self.pf_sqrt * (np.einsum("ij,ij->i", X[self.pf_lm], self.pf_normal) + self.pf_offset)
        return r, rp, active

    def cost(self, R=None, t=None, X=None):
        r, rp, _ = self.residuals(R, t, X)
        return float(np.sum(r ** 2) + np.sum(rp ** 2))

    def linearize(self) -> Linearization:
        pc = self._camera_points(self.R, self.t, self.X)
        active = pc[:, 2] > self.depth_epsilon
        rows = np.flatnonzero(active)
        pc = pc[rows]
        Ro = self.R[self.obs_pose[rows]]
        Xo = self.X[self.obs_lm[rows]]
        S = self.obs_sqrt[rows]
        x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
        fx, fy = self.k.fx, self.k.fy
        proj = np.stack([fx * x / z + self.k.cx, fy * y / z + self.k.cy], axis=1)
        r = (S @ (self.uv[rows] - proj)[:, :, None])[:, :, 0]
        dpi = np.zeros((len(rows), 2, 3))
        dpi[:, 0, 0] = fx / z
        dpi[:, 0, 2] = -fx * x / (z * z)
        dpi[:, 1, 1] = fy / z
        dpi[:, 1, 2] = -fy * y / (z * z)
        # residual = u - pi(pc); d pc / d rho = R, d pc / d phi = -R [X]x, d pc / d X = R
        A = -(S @ dpi)
        J_lm = A @ Ro
        J_pose = np.concatenate([J_lm, -(J_lm @ hat(Xo))], axis=2)
        rp = self.pf_sqrt * (np.einsum("ij,ij->i", self.X[self.pf_lm], self.pf_normal) + self.pf_offset)
        Jp = self.pf_sqrt[:, None] * self.pf_normal
        return Linearization(r, rows, J_pose, J_lm, self.pose_col[self.obs_pose[rows]],
                             self.lm_col[self.obs_lm[rows]], rp, Jp, self.lm_col[self.pf_lm])

    def retract(self, delta):
        """New (R, t, X) after applying a step in ordering layout; fixed nodes untouched."""
        delta = np.asarray(delta, dtype=float)
        R, t, X = self.R.copy(), self.t.copy(), self.X.copy()
        npc = self.ordering.n_pose_cols
        free_p = np.flatnonzero(self.pose_col >= 0)
        if len(free_p):
            dxi = delta[:npc].reshape(-1, 6)[self.pose_col[free_p]]
            dR, dt = se3_exp_batch(dxi)
            R0, t0 = self.R[free_p], self.t[free_p]
            # re-projection keeps repeated products from drifting off SO(3)
            R[free_p] = nearest_rotation(R0 @ dR)
            t[free_p] = np.einsum("nij,nj->ni", R0, dt) + t0
        free_l = np.flatnonzero(self.lm_col >= 0)
        if len(free_l):
            X[free_l] = self.X[free_l] + delta[npc:].reshape(-1, 3)[self.lm_col[free_l]]
        return R, t, X

    def set_state(self, R, t, X):
        self.R, self.t, self.X = R, t, X

    def to_graph(self) -> FactorGraph:
        g = self.graph.copy()
        for i, f in enumerate(self.pose_ids):
            if self.pose_col[i] >= 0:
                g.poses[f] = Pose(self.R[i], self.t[i])
        for i, l in enumerate(self.lm_ids):
            if self.lm_col[i] >= 0:
                g.landmarks[l] = g.landmarks[l].moved(self.X[i])
        return g


def total_cost(graph: FactorGraph, depth_epsilon: float = DEPTH_EPSILON) -> float:
    """lambda * sum(r^T Q^-1 r) + (1 - lambda) * sum(r R^-1 r) over visible edges."""
    return Problem(graph, depth_epsilon).cost()


def cost_breakdown(graph: FactorGraph, depth_epsilon: float = DEPTH_EPSILON) -> dict:
    prob = Problem(graph, depth_epsilon)
    r, rp, active = prob.residuals()
    return {"reprojection": float(np.sum(r ** 2)), "plane": float(np.sum(rp ** 2)),
            "active_edges": int(active.sum()), "deactivated_edges": int((~active).sum())}


def _jacobian_matrix(lin: Linearization, ordering: VariableOrdering):
    rows, cols, vals = [], [], []
    na = len(lin.obs_rows)
    npc = ordering.n_pose_cols
    row_base = 2 * np.arange(na)
    for k in range(2):
        free = lin.obs_pcol >= 0
        for j in range(6):
            rows.append(row_base[free] + k)
            cols.append(6 * lin.obs_pcol[free] + j)
            vals.append(lin.J_pose[free, k, j])
        free = lin.obs_lcol >= 0
        for j in range(3):
            rows.append(row_base[free] + k)
            cols.append(npc + 3 * lin.obs_lcol[free] + j)
            vals.append(lin.J_obs_lm[free, k, j])
    free = lin.plane_lcol >= 0
    prow = 2 * na + np.arange(len(lin.r_plane))
    for j in range(3):
        rows.append(prow[free])
        cols.append(npc + 3 * lin.plane_lcol[free] + j)
        vals.append(lin.J_plane[free, j])
    n_rows = 2 * na + len(lin.r_plane)
    J = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_rows, ordering.size)).tocsr()
    return J


def linearize(graph: FactorGraph, depth_epsilon: float = DEPTH_EPSILON):
    """Whitened Jacobian (CSR), residual vector, and column ordering.

    Rows: two per visible reprojection edge, then one per plane edge.
    """
    prob = Problem(graph, depth_epsilon)
    lin = prob.linearize()
    r = np.concatenate([lin.r_obs.reshape(-1), lin.r_plane])
    return _jacobian_matrix(lin, prob.ordering), r, prob.ordering


def apply_update(graph: FactorGraph, ordering: VariableOrdering, delta) -> FactorGraph:
    """Graph after ``T <- T exp(dxi)`` on free poses and ``X <- X + dX`` on free landmarks."""
    prob = Problem(graph)
    if prob.ordering.pose_ids != ordering.pose_ids or prob.ordering.landmark_ids != ordering.landmark_ids:
        raise ValueError("ordering does not match graph")
    prob.set_state(*prob.retract(delta))
    return prob.to_graph()
