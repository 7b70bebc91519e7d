import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planeloc.errors import EmptyResult, InsufficientNeighbors
from planeloc.synthetic import generate_scene, preset
from planeloc.tensor_voting import (
    PointCloud,
    PointTensor,
    Saliency,
    VotingParams,
    accumulate_tensor,
    classify,
    classify_eigenvalues,
    decay,
    label_cloud,
)


def test_decay_examples():
    assert decay(0.0, 0.7) == 1.0
    for sigma in (0.1, 0.5, 3.0):
        assert decay(sigma ** 2, sigma) == pytest.approx(np.exp(-1.0), rel=1e-15)
    assert decay(4.0, 1.0) < decay(1.0, 1.0)


@given(st.floats(0, 1e3), st.floats(0, 1e3), st.floats(1e-2, 1e2))
def test_decay_range_and_monotone(a, b, sigma):
    lo, hi = sorted((a, b))
    w_lo, w_hi = decay(lo, sigma), decay(hi, sigma)
    assert 0.0 <= w_hi <= w_lo <= 1.0


def test_coplanar_neighbors_give_plate_tensor():
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-0.5, 0.5, 30), rng.uniform(-0.5, 0.5, 30), np.zeros(30)])
    pts[0] = 0.0
    t = accumulate_tensor(0, PointCloud(pts), VotingParams())
    l1, _, l3 = t.eigenvalues
    assert abs(l3) / l1 < 1e-9
    np.testing.assert_allclose(np.abs(t.eigenvectors[:, 2]), [0, 0, 1], atol=1e-9)


def test_collinear_neighbors_give_stick_tensor():
    pts = np.column_stack([np.linspace(-0.5, 0.5, 11), np.zeros(11), np.zeros(11)])
    t = accumulate_tensor(5, PointCloud(pts), VotingParams())
    l1, l2, l3 = t.eigenvalues
    assert abs(l2) / l1 < 1e-9 and abs(l3) / l1 < 1e-9
    np.testing.assert_allclose(np.abs(t.eigenvectors[:, 0]), [1, 0, 0], atol=1e-9)


def test_isolated_point_has_insufficient_neighbors():
    pts = np.array([[0.0, 0, 0], [5.0, 0, 0], [0, 5.0, 0], [0, 0, 5.0]])
    with pytest.raises(InsufficientNeighbors):
        accumulate_tensor(0, PointCloud(pts), VotingParams())


def test_votee_excluded_from_its_own_tensor():
    pts = np.array([[0.0, 0, 0], [0.1, 0, 0], [0, 0.1, 0], [-0.1, -0.1, 0]])
    with pytest.raises(InsufficientNeighbors):
        accumulate_tensor(0, PointCloud(pts), VotingParams(min_neighbors=4))
    accumulate_tensor(0, PointCloud(pts), VotingParams(min_neighbors=3))


def test_tensor_matches_weighted_covariance():
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.6, 0.6, (40, 3))
    params = VotingParams(sigma=0.4, radius=0.8)
    t = accumulate_tensor(0, PointCloud(pts), params)
    off = pts[1:] - pts[0]
    d2 = np.sum(off ** 2, axis=1)
    m = d2 <= params.radius ** 2
    w = np.exp(-d2[m] / params.sigma ** 2)
    expected = (off[m].T * w) @ off[m] / w.sum()
    np.testing.assert_allclose(t.tensor, expected, atol=1e-12)


def eig_tensor(vals, rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    return PointTensor.from_tensor(q @ np.diag(vals) @ q.T)


def test_classify_examples():
    rng = np.random.default_rng(2)
    t = eig_tensor([1.0, 1.0, 0.0], rng)
    lab = classify(t)
    assert lab.kind is Saliency.PLATE
    assert abs(abs(lab.orientation @ t.eigenvectors[:, 2]) - 1) < 1e-9
    t = eig_tensor([1.0, 0.0, 0.0], rng)
    lab = classify(t)
    assert lab.kind is Saliency.STICK
    assert abs(abs(lab.orientation @ t.eigenvectors[:, 0]) - 1) < 1e-9
    lab = classify(PointTensor.from_tensor(np.eye(3)))
    assert lab.kind is Saliency.BALL
    np.testing.assert_array_equal(lab.orientation, np.zeros(3))


def test_classify_tie_goes_to_stick():
    assert classify_eigenvalues([2.0, 1.0, 0.0])[0] == 0


def random_psd(rng):
    a = rng.normal(size=(3, 3)) * rng.uniform(0.01, 10)
    return a @ a.T


def test_tensor_decomposition_properties():
    rng = np.random.default_rng(3)
    for _ in range(200):
        t = PointTensor.from_tensor(random_psd(rng))
        l1, l2, l3 = t.eigenvalues
        assert l1 >= l2 >= l3 >= -1e-9
        tol = 1e-7 * max(1.0, l1)
        np.testing.assert_allclose(t.tensor @ t.eigenvectors, t.eigenvectors * t.eigenvalues, atol=tol)
        stick, plate, ball = t.components()
        np.testing.assert_allclose(stick + plate + ball, t.tensor, atol=1e-9 * max(1.0, l1))
        np.testing.assert_allclose(t.eigenvectors.T @ t.eigenvectors, np.eye(3), atol=1e-12)


def test_classification_scale_invariant():
    rng = np.random.default_rng(4)
    for _ in range(200):
        m = random_psd(rng)
        c = float(rng.uniform(1e-3, 1e3))
        a = classify(PointTensor.from_tensor(m)).kind
        b = classify(PointTensor.from_tensor(c * m)).kind
        assert a is b


def point_line_distance(p, a, d):
    off = p - a
    return np.linalg.norm(off - np.outer(off @ d, d), axis=1)


@pytest.mark.parametrize("seed", range(3))
def test_orthogonal_planes_are_plate_with_true_normals(seed):
    scene = generate_scene(preset("orthogonal3", seed=seed))
    params = VotingParams(sigma=0.5, radius=1.0)
    labels = label_cloud(scene.cloud, params)
    pts = scene.cloud.points
    normals = [p.normal / np.linalg.norm(p.normal) for p in scene.planes]
    offsets = [p.offset / np.linalg.norm(p.normal) for p in scene.planes]
    # distance to every pairwise intersection line
    near_edge = np.zeros(len(pts), dtype=bool)
    for i in range(3):
        for j in range(i + 1, 3):
            d = np.cross(normals[i], normals[j])
            d /= np.linalg.norm(d)
            a = np.linalg.solve(np.array([normals[i], normals[j], d]), [-offsets[i], -offsets[j], 0.0])
            near_edge |= point_line_distance(pts, a, d) <= 2 * params.sigma
    owner = np.argmin(np.abs(np.column_stack([pts @ n + b for n, b in zip(normals, offsets)])), axis=1)
    kind = np.full(len(pts), -1)
    kind[labels.indices] = labels.kinds
    orient = np.zeros((len(pts), 3))
    orient[labels.indices] = labels.orientations
    interior = ~near_edge
    cos = np.abs(np.einsum("ij,ij->i", orient, np.array(normals)[owner]))
    good = interior & (kind == 1) & (cos >= np.cos(np.radians(2.0)))
    assert good.sum() >= 0.95 * interior.sum()


def gaussian_cloud_labels():
    rng = np.random.default_rng(5)
    pts = rng.normal(scale=0.1, size=(10000, 3))
    labels = label_cloud(PointCloud(pts), VotingParams(sigma=50.0, radius=2.0), require_plate=False)
    return pts, labels


def test_gaussian_ball_fraction_matches_offset_tensor_oracle():
    """With all points as neighbors and flat weights, each tensor is C + m m^T.

    m is the offset from the votee to the cloud mean, so a point is Ball
    exactly when |m| is below the cloud's standard deviation: P(chi2_3 < 1).
    """
    pts, labels = gaussian_cloud_labels()
    cov = np.cov(pts.T, bias=True)
    assert classify_eigenvalues(np.linalg.eigvalsh(cov)[::-1])[0] == 2
    m = pts.mean(axis=0) - pts
    predicted = np.array([classify_eigenvalues(np.linalg.eigvalsh(cov + np.outer(v, v))[::-1])[0]
                          for v in m[:500]])
    np.testing.assert_array_equal(labels.kinds[:500], predicted)
    assert np.mean(labels.kinds == 2) == pytest.approx(0.1987, abs=0.02)


@pytest.mark.xfail(strict=True, reason="offset tensor about the votee is Ball for about 20% of a Gaussian cloud")
def test_isotropic_gaussian_is_mostly_ball():
    _, labels = gaussian_cloud_labels()
    assert np.mean(labels.kinds == 2) > 0.5


def test_points_on_a_line_are_all_stick():
    pts = np.column_stack([np.linspace(0, 5, 200), 2 * np.linspace(0, 5, 200), np.ones(200)])
    labels = label_cloud(PointCloud(pts), VotingParams(), require_plate=False)
    assert len(labels) == 200
    assert np.all(labels.kinds == 0)


def test_no_plate_raises_empty_result():
    pts = np.column_stack([np.linspace(0, 5, 200), np.zeros(200), np.zeros(200)])
    with pytest.raises(EmptyResult):
        label_cloud(PointCloud(pts), VotingParams())
    with pytest.raises(EmptyResult):
        label_cloud(PointCloud(np.zeros((0, 3))), VotingParams())


def test_non_finite_cloud_rejected():
    with pytest.raises(ValueError):
        PointCloud([[0.0, np.nan, 1.0]])


def test_plate_orientations_are_unit():
    scene = generate_scene(preset("orthogonal3", seed=0))
    labels = label_cloud(scene.cloud)
    n = np.linalg.norm(labels.orientations[labels.kinds != 2], axis=1)
    np.testing.assert_allclose(n, 1.0, atol=1e-9)


def test_labels_independent_of_point_order():
    scene = generate_scene(preset("orthogonal3", seed=1, n_points=1500))
    pts = scene.cloud.points
    perm = np.random.default_rng(6).permutation(len(pts))
    a = label_cloud(PointCloud(pts))
    b = label_cloud(PointCloud(pts[perm]))
    ka = np.full(len(pts), -1)
    ka[a.indices] = a.kinds
    kb = np.full(len(pts), -1)
    kb[perm[b.indices]] = b.kinds
    np.testing.assert_array_equal(ka, kb)
    oa = np.zeros((len(pts), 3))
    oa[a.indices] = a.orientations
    ob = np.zeros((len(pts), 3))
    ob[perm[b.indices]] = b.orientations
    np.testing.assert_allclose(np.abs(np.einsum("ij,ij->i", oa, ob)), np.linalg.norm(oa, axis=1) ** 2, atol=1e-9)


def test_labels_independent_of_worker_count():
    scene = generate_scene(preset("orthogonal3", seed=2, n_points=1500))
    a = label_cloud(scene.cloud, workers=1)
    b = label_cloud(scene.cloud, workers=4)
    np.testing.assert_array_equal(a.indices, b.indices)
    np.testing.assert_array_equal(a.kinds, b.kinds)
    np.testing.assert_array_equal(a.orientations, b.orientations)
    np.testing.assert_array_equal(a.eigenvalues, b.eigenvalues)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_accumulated_tensors_symmetric_psd(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, (30, 3))
    labels = label_cloud(PointCloud(pts), VotingParams(), require_plate=False)
    assert np.all(labels.eigenvalues[:, 2] >= -1e-9)
    assert np.all(np.diff(labels.eigenvalues, axis=1) <= 0)
