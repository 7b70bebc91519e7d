"""Levenberg-Marquardt with additive damping and landmark Schur elimination."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from ..errors import SingularSystem
from .graph import FactorGraph, LmConfig
from .residuals import Linearization, Problem

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IterationStats:
    iteration: int
    cost: float          # cost after this iteration (unchanged on rejection)
    damping: float       # damping used to compute the step
    accepted: bool
    step_norm: float
    candidate_cost: float


class SolveResult(NamedTuple):
    graph: FactorGraph
    stats: list
    initial_cost: float
    final_cost: float
    converged: bool
    deactivated_edges: int

    @property
    def accepted_steps(self):
        return sum(s.accepted for s in self.stats)


def _segment_sum(index, values, n):
    """Sum rows of ``values`` (m, ...) into ``n`` bins by ``index``; faster than ufunc.at."""
    shape = values.shape[1:]
    k = int(np.prod(shape))
    flat = (index[:, None] * k + np.arange(k)).ravel()
    sums = np.bincount(flat, weights=values.reshape(-1), minlength=n * k)
    return sums.astype(float, copy=False).reshape((n,) + shape)


def _normal_blocks(lin: Linearization, n_pose: int, n_lm: int):
    p = lin.obs_pcol >= 0
    Jp, rp = lin.J_pose[p], lin.r_obs[p]
    JpT = np.swapaxes(Jp, 1, 2)
    Hpp = _segment_sum(lin.obs_pcol[p], JpT @ Jp, n_pose)
    gp = _segment_sum(lin.obs_pcol[p], (JpT @ rp[:, :, None])[:, :, 0], n_pose)
    l = lin.obs_lcol >= 0
    Jl, rl = lin.J_obs_lm[l], lin.r_obs[l]
    JlT = np.swapaxes(Jl, 1, 2)
    Hll = _segment_sum(lin.obs_lcol[l], JlT @ Jl, n_lm)
    gl = _segment_sum(lin.obs_lcol[l], (JlT @ rl[:, :, None])[:, :, 0], n_lm)
    q = lin.plane_lcol >= 0
    if np.any(q):
        Jq = lin.J_plane[q]
        Hll += _segment_sum(lin.plane_lcol[q], Jq[:, :, None] * Jq[:, None, :], n_lm)
        gl += _segment_sum(lin.plane_lcol[q], Jq * lin.r_plane[q][:, None], n_lm)
    both = p & l
    # pose-landmark coupling, dense (6 * n_pose, n_lm, 3); windows keep n_pose small
    Hpl = np.swapaxes(lin.J_pose[both], 1, 2) @ lin.J_obs_lm[both]
    B = _segment_sum(lin.obs_pcol[both] * n_lm + lin.obs_lcol[both], Hpl, n_pose * n_lm)
    B = B.reshape(n_pose, n_lm, 6, 3).transpose(0, 2, 1, 3)
    return Hpp, gp, Hll, gl, B.reshape(6 * n_pose, n_lm, 3)


def solve_damped(blocks, n_pose: int, n_lm: int, damping: float):
    """Solve (J^T J + damping I) dx = -J^T r by eliminating landmarks first.

    Raises numpy.linalg.LinAlgError if a factorization fails.
    """
    Hpp, gp, Hll, gl, B = blocks
    C = Hll + damping * np.eye(3)
    if n_lm:
        np.linalg.cholesky(C)  # raises when a landmark block is not positive definite
        Cinv = np.linalg.inv(C)
    else:
        Cinv = np.zeros((0, 3, 3))
    if n_pose == 0:
        return (-(Cinv @ gl[:, :, None])[:, :, 0]).reshape(-1)

    np_cols = 6 * n_pose
    A = np.zeros((np_cols, np_cols))
    for i in range(n_pose):
        A[6 * i:6 * i + 6, 6 * i:6 * i + 6] = Hpp[i]
    A[np.diag_indices(np_cols)] += damping
    rhs = -gp.reshape(-1)
    if n_lm:
        Bl = np.swapaxes(B, 0, 1)                      # (n_lm, np_cols, 3)
        BC = Bl @ Cinv                                 # per-landmark B C^-1
        A -= np.swapaxes(BC, 0, 1).reshape(np_cols, -1) @ B.reshape(np_cols, -1).T
        rhs += np.swapaxes(BC, 0, 1).reshape(np_cols, -1) @ gl.reshape(-1)
    cf = scipy.linalg.cho_factor(A, lower=False, check_finite=True)
    dp = scipy.linalg.cho_solve(cf, rhs)
    if n_lm == 0:
        return dp
    back = -gl - (np.swapaxes(Bl, 1, 2) @ dp)             # (n_lm, 3)
    dl = (Cinv @ back[:, :, None])[:, :, 0]
    return np.concatenate([dp, dl.reshape(-1)])


def lm_solve(graph: FactorGraph, config: LmConfig = LmConfig(), depth_epsilon: float = 1e-6) -> SolveResult:
    """Minimize the weighted total cost of ``graph``.

    A step is accepted only if it strictly lowers the cost. Stops on
    ``max_iters``, a gradient below ``grad_tol`` (max norm), a relative decrease
    below ``cost_tol``, a step shorter than ``step_tol``, or damping growing
    past ``max_damping`` without progress.
    """
    prob = Problem(graph, depth_epsilon)
    n_pose = len(prob.ordering.pose_ids)
    n_lm = len(prob.ordering.landmark_ids)
    if n_pose + n_lm == 0:
        raise ValueError("graph has no free variables")
    r, rp, active = prob.residuals()
    cost = float(np.sum(r ** 2) + np.sum(rp ** 2))
    initial_cost = cost
    damping = config.initial_damping
    stats = []
    converged = False
    blocks = None
    for it in range(1, config.max_iters + 1):
        if cost == 0.0:
            converged = True
            break
        if blocks is None:
            blocks = _normal_blocks(prob.linearize(), n_pose, n_lm)
            if not all(np.all(np.isfinite(b)) for b in blocks):
                raise SingularSystem("non-finite normal equations")
            grad = max(np.abs(blocks[1]).max(initial=0.0), np.abs(blocks[3]).max(initial=0.0))
            if grad <= config.grad_tol:
                converged = True
                break
        while True:
            try:
                delta = solve_damped(blocks, n_pose, n_lm, damping)
                if not np.all(np.isfinite(delta)):
                    raise np.linalg.LinAlgError("non-finite step")
                break
            except np.linalg.LinAlgError:
                damping *= config.damping_up
                if damping > config.max_damping:
                    raise SingularSystem(f"factorization failed at damping {damping:.3g}")
        step_norm = float(np.linalg.norm(delta))
        if step_norm < config.step_tol:
            converged = True
            break
        R, t, X = prob.retract(delta)
        new_cost = prob.cost(R, t, X)
        if new_cost < cost:
            rel = (cost - new_cost) / cost
            prob.set_state(R, t, X)
            stats.append(IterationStats(it, new_cost, damping, True, step_norm, new_cost))
            cost = new_cost
            damping = max(damping * config.damping_down, min(config.min_damping, damping))
            blocks = None
            if rel < config.cost_tol:
                converged = True
                break
        else:
            stats.append(IterationStats(it, cost, damping, False, step_norm, new_cost))
            damping *= config.damping_up
            if damping > config.max_damping:
                converged = True
                break
    _, _, active = prob.residuals()
    return SolveResult(prob.to_graph(), stats, initial_cost, cost, converged, int((~active).sum()))
