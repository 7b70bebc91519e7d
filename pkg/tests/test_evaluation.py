import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planeloc.errors import IoFailure, NoOverlap
from planeloc.evaluation import Trajectory, ate, report
from planeloc.geometry import Pose, Twist, se3_exp


def line_trajectory(n=10, offset=(0.0, 0.0, 0.0), ids=None):
    ids = list(range(n)) if ids is None else ids
    return Trajectory(ids, [Pose(np.eye(3), np.array([float(i), 0.5 * i, 0.1 * i]) + offset) for i in ids])


def test_identical_trajectories_have_zero_error():
    gt = line_trajectory()
    for mode in ("planar", "spatial"):
        r = ate(gt, gt, mode)
        assert r.row() == [0.0, 0.0, 0.0, 0.0, 0.0]


def test_three_four_five_offset():
    gt = line_trajectory()
    r = ate(line_trajectory(offset=(3.0, 4.0, 0.0)), gt, "planar")
    assert r.mean == 5.0 and r.rmse == 5.0 and r.std == 0.0
    assert r.max == 5.0 and r.min == 5.0


def test_planar_ignores_height():
    gt = line_trajectory()
    est = line_trajectory(offset=(0.0, 0.0, 7.0))
    assert ate(est, gt, "planar").rmse == 0.0
    assert ate(est, gt, "spatial").rmse == pytest.approx(7.0)


def test_two_frame_hand_arithmetic():
    gt = line_trajectory(2)
    est = Trajectory([0, 1], [Pose(np.eye(3), gt.poses[0].translation + [1.0, 0, 0]),
                              Pose(np.eye(3), gt.poses[1].translation + [0, 3.0, 0])])
    r = ate(est, gt)
    assert r.mean == pytest.approx(2.0, abs=1e-15)
    assert r.rmse == pytest.approx(math.sqrt(5.0), abs=1e-15)
    assert r.std == pytest.approx(1.0, abs=1e-15)
    assert abs(r.rmse ** 2 - r.mean ** 2 - r.std ** 2) <= 1e-9


def test_disjoint_frames_raise_no_overlap():
    with pytest.raises(NoOverlap):
        ate(line_trajectory(ids=[0, 1, 2]), line_trajectory(ids=[5, 6]))


def test_only_common_frames_count():
    gt = line_trajectory(ids=[0, 1, 2, 3])
    est = line_trajectory(ids=[2, 3, 4], offset=(1.0, 0, 0))
    r = ate(est, gt)
    assert r.frame_ids == [2, 3]
    np.testing.assert_array_equal(r.errors, [1.0, 1.0])


def test_invalid_mode_and_frame_order():
    with pytest.raises(ValueError):
        ate(line_trajectory(), line_trajectory(), "vertical")
    with pytest.raises(ValueError):
        Trajectory([1, 1], [Pose(), Pose()])


def test_alignment_removes_rigid_offset():
    rng = np.random.default_rng(0)
    gt = Trajectory(list(range(20)), [Pose(np.eye(3), p) for p in rng.normal(size=(20, 3)) * 5])
    T = se3_exp(Twist([1.0, -2.0, 0.5], [0.1, 0.2, 0.3]))
    est = Trajectory(gt.frame_ids, [T @ p for p in gt.poses])
    assert ate(est, gt, "spatial").rmse > 1.0
    assert ate(est, gt, "spatial", align=True).rmse < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100), st.floats(-100, 100)),
                min_size=1, max_size=30))
def test_statistics_invariants(offsets):
    n = len(offsets)
    gt = line_trajectory(n)
    est = Trajectory(gt.frame_ids, [Pose(np.eye(3), p.translation + o) for p, o in zip(gt.poses, offsets)])
    planar, spatial = ate(est, gt, "planar"), ate(est, gt, "spatial")
    assert np.all(planar.errors <= spatial.errors + 1e-12)
    for r in (planar, spatial):
        assert r.min <= r.mean + 1e-12 and r.mean <= r.max + 1e-12
        assert r.rmse >= r.mean - 1e-12
        assert abs(r.rmse ** 2 - r.mean ** 2 - r.std ** 2) <= 1e-9 * max(1.0, r.rmse ** 2)
    perm = np.random.default_rng(n).permutation(n)
    shuffled = Trajectory(gt.frame_ids, [est.poses[i] for i in perm])
    gt_shuffled = Trajectory(gt.frame_ids, [gt.poses[i] for i in perm])
    r2 = ate(shuffled, gt_shuffled, "spatial")
    assert r2.mean == pytest.approx(spatial.mean, rel=1e-12, abs=1e-12)
    assert r2.rmse == pytest.approx(spatial.rmse, rel=1e-12, abs=1e-12)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_report_one_row(tmp_path):
    gt = line_trajectory()
    r = ate(line_trajectory(offset=(3.0, 4.0, 0.0)), gt)
    paths = report([("ba", r)], tmp_path)
    rows = read_csv(tmp_path / "ate_summary.csv")
    assert rows[0] == ["method", "mean", "rmse", "std", "max", "min"]
    assert rows[1] == ["ba", "5.0", "5.0", "0.0", "5.0", "5.0"]
    assert len(rows) == 2
    per_frame = read_csv(tmp_path / "ate_per_frame.csv")
    assert per_frame[0] == ["method", "frame_id", "error"] and len(per_frame) == 11
    assert (tmp_path / "plot_trajectories.py").exists()
    assert len(paths) == 4


def test_report_two_rows(tmp_path):
    gt = line_trajectory()
    reports = [("plane", ate(gt, gt)), ("ba", ate(line_trajectory(offset=(1.0, 0, 0)), gt))]
    report(reports, tmp_path)
    rows = read_csv(tmp_path / "ate_summary.csv")
    assert [r[0] for r in rows[1:]] == ["plane", "ba"]
    assert all(len(r) == 6 for r in rows)
    compile((tmp_path / "plot_trajectories.py").read_text(), "plot", "exec")


def test_report_rejects_empty_and_duplicates(tmp_path):
    gt = line_trajectory()
    with pytest.raises(ValueError):
        report([], tmp_path)
    with pytest.raises(ValueError):
        report([("a", ate(gt, gt)), ("a", ate(gt, gt))], tmp_path)


def test_report_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    gt = line_trajectory()
    with pytest.raises(IoFailure):
        report([("a", ate(gt, gt))], blocker / "out")
