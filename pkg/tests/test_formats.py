import numpy as np
import pytest

from cloudvision.errors import BadMagic
from cloudvision.formats import (
    LidarScan,
    TimedPose,
    format_tum_line,
    read_pgm,
    read_scan,
    read_scan_dir,
    read_tum,
    write_pgm,
    write_scan,
    write_tum,
)
from cloudvision.geometry import Pose


def test_tum_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    traj = [TimedPose(0.1 * i, Pose.from_rotvec(rng.normal(size=3), rng.normal(size=3))) for i in range(20)]
    write_tum(tmp_path / "t.tum", traj)
    back = read_tum(tmp_path / "t.tum")
    assert [b.timestamp for b in back] == [a.timestamp for a in traj]
    for a, b in zip(traj, back):
        # repr() keeps every digit; renormalising the quaternion may move the last bit.
        assert np.allclose(a.pose.q, b.pose.q, rtol=0, atol=1e-15)
        assert np.array_equal(a.pose.t, b.pose.t)


def test_tum_line_field_order():
    tp = TimedPose(1.5, Pose(np.array([1.0, 0, 0, 0]), np.array([1.0, 2.0, 3.0])))
    assert format_tum_line(tp).split() == ["1.5", "1.0", "2.0", "3.0", "0.0", "0.0", "0.0", "1.0"]


def test_tum_comments_and_bad_lines(tmp_path):
    path = tmp_path / "t.tum"
    path.write_text("# header\n\n0 0 0 0 0 0 0 1  # trailing\n")
    assert len(read_tum(path)) == 1
    path.write_text("0 0 0 0 0 0 1\n")
    with pytest.raises(ValueError):
        read_tum(path)


def test_pgm_roundtrip(tmp_path):
    img = np.arange(12 * 7, dtype=np.uint8).reshape(7, 12)
    write_pgm(tmp_path / "a.pgm", img)
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), img)
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n12 7\n255\n")


def test_pgm_header_comments(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x05\x06")
    assert read_pgm(path).tolist() == [[5, 6]]


def test_pgm_rejects_other_formats(tmp_path):
    path = tmp_path / "x.pgm"
    path.write_bytes(b"P2\n1 1\n255\n0\n")
    with pytest.raises(BadMagic):
        read_pgm(path)


def test_scan_roundtrip_in_float32(tmp_path):
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(50, 3)) * 10
    write_scan(tmp_path / "s.cvsc", LidarScan(3.25, pts))
    back = read_scan(tmp_path / "s.cvsc")
    assert back.timestamp == 3.25
    assert np.array_equal(back.points, pts.astype(np.float32).astype(np.float64))
    assert (tmp_path / "s.cvsc").stat().st_size == 6 + 8 + 4 + 12 * 50


def test_scan_errors(tmp_path):
    (tmp_path / "bad.cvsc").write_bytes(b"XXXXXX" + bytes(12))
    with pytest.raises(BadMagic):
        read_scan(tmp_path / "bad.cvsc")
    write_scan(tmp_path / "t.cvsc", LidarScan(0.0, np.zeros((2, 3))))
    data = (tmp_path / "t.cvsc").read_bytes()
    (tmp_path / "t.cvsc").write_bytes(data[:-4])
    with pytest.raises(ValueError):
        read_scan(tmp_path / "t.cvsc")


def test_scan_dir_is_sorted(tmp_path):
    for name, t in (("b.cvsc", 2.0), ("a.cvsc", 1.0), ("c.cvsc", 3.0)):
        write_scan(tmp_path / name, LidarScan(t, np.zeros((0, 3))))
    assert [s.timestamp for s in read_scan_dir(tmp_path)] == [1.0, 2.0, 3.0]
