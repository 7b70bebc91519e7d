"""Small seeded factor graphs shared by the optimizer and acceptance tests."""
import numpy as np

from planeloc.geometry import CameraIntrinsics, Landmark, Pose, Twist, project, se3_exp
from planeloc.optimizer import FactorGraph, Observation, PlaneFactor
from planeloc.plane_map import Plane

K = CameraIntrinsics(fx=500.0, fy=520.0, cx=320.0, cy=240.0, baseline=0.5)


def random_pose(rng, rot=0.3, trans=1.0):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return se3_exp(Twist(rng.uniform(-trans, trans, 3), axis * rng.uniform(0, rot)))


def random_graph(rng, n_poses=3, n_landmarks=12, n_planes=2, noise=1.0):
    """Cameras near the origin looking along +z at landmarks 4-12 m ahead.

    Pose 0 is fixed. Some landmarks carry plane factors to random planes
    passing near them; pixels carry ``noise`` px of Gaussian error.
    """
    g = FactorGraph(K, lambda_weight=float(rng.uniform(0.1, 0.9)))
    for f in range(n_poses):
        g.add_pose(f, random_pose(rng, 0.1, 0.5), fixed=(f == 0))
    planes = []
    for j in range(n_planes):
        n = rng.normal(size=3)
        planes.append(Plane(n * rng.uniform(0.5, 3.0), rng.normal(), j))
        g.add_plane(planes[-1])
    for l in range(n_landmarks):
        p = np.array([rng.uniform(-3, 3), rng.uniform(-2, 2), rng.uniform(4, 12)])
        g.add_landmark(Landmark(l, p))
        for f in range(n_poses):
            pix = project(K, g.poses[f], p) + rng.normal(0, noise, 2)
            a = rng.uniform(0.5, 2.0)
            b = rng.uniform(-0.3, 0.3)
            info = np.array([[a, b], [b, rng.uniform(0.5, 2.0) + b * b / a]])
            g.observations.append(Observation(f, l, pix, None, info))
        if l % 3 == 0 and planes:
            g.plane_factors.append(PlaneFactor(l, int(rng.integers(len(planes))), float(rng.uniform(1, 100))))
    return g


def single_pose_problem(rng, n_landmarks=20, perturb=0.1, noise=0.0):
    """One free pose observing fixed landmarks; returns (graph, ground-truth pose)."""
    truth = random_pose(rng, 0.5, 2.0)
    g = FactorGraph(K, lambda_weight=1.0)
    cam_to_world = truth.inverse()
    for l in range(n_landmarks):
        pc = np.array([rng.uniform(-4, 4), rng.uniform(-3, 3), rng.uniform(4, 15)])
        g.add_landmark(Landmark(l, cam_to_world.apply(pc)), fixed=True)
        pix = project(K, truth, g.landmarks[l].position) + rng.normal(0, noise, 2)
        g.observations.append(Observation(0, l, pix))
    d = rng.normal(size=6)
    g.add_pose(0, truth @ se3_exp(Twist.from_vector(d / np.linalg.norm(d) * perturb)))
    return g, truth
