import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from planeloc import io
from planeloc.errors import IoFailure, NonRigidPose, ParseError
from planeloc.evaluation import Trajectory
from planeloc.geometry import Pose, Twist, se3_exp
from planeloc.optimizer import Observation
from planeloc.plane_map import Plane, PlaneMap


def write(tmp_path, text, name="f.txt"):
    p = tmp_path / name
    p.write_bytes(text.encode() if isinstance(text, str) else text)
    return p


# point clouds --------------------------------------------------------------

def test_read_cloud_examples(tmp_path):
    assert len(io.read_cloud(write(tmp_path, "0 0 0\n1 2 3"))) == 2
    c = io.read_cloud(write(tmp_path, "# hdr\n1 2 3"))
    np.testing.assert_array_equal(c.points, [[1.0, 2.0, 3.0]])
    assert len(io.read_cloud(write(tmp_path, ""))) == 0
    assert len(io.read_cloud(write(tmp_path, "\n  \n1 2 3\r\n\n"))) == 1


def test_read_cloud_error_locations(tmp_path):
    with pytest.raises(ParseError) as e:
        io.read_cloud(write(tmp_path, "1 2"))
    assert e.value.line == 1
    with pytest.raises(ParseError) as e:
        io.read_cloud(write(tmp_path, "# c\n0 0 0\n1 x 3\n"))
    assert (e.value.line, e.value.column) == (3, 3)
    with pytest.raises(ParseError) as e:
        io.read_cloud(write(tmp_path, "0 0 0\n1 2 3 4\n"))
    assert (e.value.line, e.value.column) == (2, 7)
    for bad in ("nan 0 0", "inf 0 0", "1e999 0 0", "0x10 0 0", "1_0 0 0"):
        with pytest.raises(ParseError):
            io.read_cloud(write(tmp_path, bad))


def test_read_missing_file(tmp_path):
    with pytest.raises(IoFailure):
        io.read_cloud(tmp_path / "absent.txt")


def test_invalid_utf8_location(tmp_path):
    with pytest.raises(ParseError) as e:
        io.read_cloud(write(tmp_path, b"0 0 0\n1 \xff 2\n"))
    assert (e.value.line, e.value.column) == (2, 3)


def test_cloud_roundtrip(tmp_path):
    pts = np.random.default_rng(0).normal(size=(50, 3)) * 1e3
    io.write_cloud(pts, tmp_path / "c.txt")
    np.testing.assert_array_equal(io.read_cloud(tmp_path / "c.txt").points, pts)


# observations ---------------------------------------------------------------

def test_observation_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    obs = [Observation(int(f), int(l), rng.uniform(0, 1000, 2), None if l % 3 == 0 else float(rng.uniform(1, 50)))
           for f, l in zip(rng.integers(0, 10, 40), range(40))]
    io.write_observations(obs, tmp_path / "o.csv")
    back = io.read_observations(tmp_path / "o.csv")
    assert [(o.frame_id, o.landmark_id, tuple(o.pixel), o.disparity) for o in obs] == \
           [(o.frame_id, o.landmark_id, tuple(o.pixel), o.disparity) for o in back]


def test_observation_errors(tmp_path):
    with pytest.raises(ParseError) as e:
        io.read_observations(write(tmp_path, "frame,lm,u,v,d\n"))
    assert e.value.line == 1
    with pytest.raises(ParseError) as e:
        io.read_observations(write(tmp_path, "frame_id,landmark_id,u,v,disparity\n0,1,2,3,\n0,1.5,2,3,4\n"))
    assert (e.value.line, e.value.column) == (3, 3)
    with pytest.raises(ParseError) as e:
        io.read_observations(write(tmp_path, "frame_id,landmark_id,u,v,disparity\n0,1,2\n"))
    assert e.value.line == 2


# trajectories ---------------------------------------------------------------

def test_kitti_identity_line(tmp_path):
    t = io.read_trajectory(write(tmp_path, "1 0 0 0 0 1 0 0 0 0 1 0\n"))
    assert t.frame_ids == [0]
    np.testing.assert_array_equal(t.poses[0].as_matrix(), np.eye(4))


def test_trajectory_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    poses = [se3_exp(Twist.from_vector(rng.normal(size=6) * 3)) for _ in range(30)]
    io.write_trajectory(Trajectory(list(range(30)), poses), tmp_path / "t.txt")
    back = io.read_trajectory(tmp_path / "t.txt")
    for a, b in zip(poses, back.poses):
        np.testing.assert_allclose(b.as_matrix(), a.as_matrix(), rtol=0, atol=1e-15)


def test_reflection_rejected(tmp_path):
    with pytest.raises(NonRigidPose):
        io.read_trajectory(write(tmp_path, "1 0 0 0 0 1 0 0 0 0 -1 0\n"))
    with pytest.raises(NonRigidPose):
        io.read_trajectory(write(tmp_path, "2 0 0 0 0 1 0 0 0 0 1 0\n"))


def test_near_rotation_reorthonormalized(tmp_path):
    t = io.read_trajectory(write(tmp_path, "1.0000001 0 0 5 0 1 0 6 0 0 1 7\n"))
    R = t.poses[0].rotation
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-15)
    np.testing.assert_array_equal(t.poses[0].translation, [5.0, 6.0, 7.0])


def test_trajectory_wrong_field_count(tmp_path):
    with pytest.raises(ParseError) as e:
        io.read_trajectory(write(tmp_path, "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0\n"))
    assert e.value.line == 2


# plane maps -------------------------------------------------------------------

def plane_map():
    planes = [Plane([0, 0, 1.0], -2.0, 0, 120), Plane(np.array([1.0, 1.0, 0]) / np.sqrt(2), 0.3, 4, 77)]
    support = {0: np.array([[0.0, 0, 2], [1.0, 0, 2], [0.01, 0, 2]]), 4: np.array([[1.0, -1.0, 5.0]])}
    return PlaneMap(planes, support)


def test_plane_roundtrip(tmp_path):
    io.write_planes(plane_map(), tmp_path / "p.txt")
    back = io.read_planes(tmp_path / "p.txt")
    for a, b in zip(plane_map().planes, back.planes):
        np.testing.assert_array_equal(a.normal, b.normal)
        assert (a.offset, a.id, a.support_count) == (b.offset, b.id, b.support_count)
    # decimation keeps the first point of each 0.1 m voxel
    np.testing.assert_array_equal(back.support[0], [[0.0, 0, 2], [1.0, 0, 2]])
    assert not io.read_planes(tmp_path / "p.txt", load_support=False).support


def test_plane_file_without_support_drops_stale_sidecar(tmp_path):
    io.write_planes(plane_map(), tmp_path / "p.txt")
    io.write_planes(PlaneMap(plane_map().planes), tmp_path / "p.txt")
    assert not (tmp_path / "p.txt.support").exists()
    assert io.read_planes(tmp_path / "p.txt").support == {}


def test_empty_plane_file(tmp_path):
    assert len(io.read_planes(write(tmp_path, "# nothing\n"))) == 0


def test_plane_errors(tmp_path):
    with pytest.raises(ParseError) as e:
        io.read_planes(write(tmp_path, "0 0 0 2 1 5\n"))
    assert e.value.line == 1
    with pytest.raises(ParseError) as e:
        io.read_planes(write(tmp_path, "0 0 0 1 1 5\n0 1 0 0 1 5\n"))
    assert "duplicate" in str(e.value) and e.value.line == 2
    with pytest.raises(ParseError):
        io.read_planes(write(tmp_path, "0 0 0 1 1\n"))


# fuzz -----------------------------------------------------------------------------

READERS = [io.read_cloud, io.read_observations, io.read_planes]


@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.binary(max_size=200) | st.text(alphabet="0123456789 .,-+eE#\n\r\tnafix", max_size=200).map(str.encode))
def test_parsers_never_crash(tmp_path, data):
    p = tmp_path / "fuzz"
    p.write_bytes(data)
    for reader in READERS:
        try:
            reader(p)
        except ParseError:
            pass
    try:
        io.read_trajectory(p)
    except (ParseError, NonRigidPose):
        pass
