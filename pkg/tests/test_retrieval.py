import numpy as np
import pytest

from cloudvision.errors import BadMagic, CorruptIndex, EmptyDatabase, ImageTooSmall
from cloudvision.formats import TimedPose
from cloudvision.geometry import Pose
from cloudvision.retrieval import (
    RetrievalDatabase,
    compute_descriptor,
    load_database,
    query_top_k,
    save_database,
)


def noise(seed, shape=(60, 80)):
    return np.random.default_rng(seed).integers(0, 256, shape).astype(np.uint8)


def small_db(n=12, kind="tiny"):
    images = [noise(i) for i in range(n)]
    poses = [TimedPose(float(i), Pose.from_rotvec([0, 0, 0.1 * i], [i, 0, 0])) for i in range(n)]
    return images, RetrievalDatabase.build(images, poses, kind)


@pytest.mark.parametrize("kind", ["tiny", "hog"])
def test_descriptors_are_unit_length_and_deterministic(kind):
    d = compute_descriptor(noise(1), kind)
    assert abs(np.linalg.norm(d) - 1.0) < 1e-6
    assert np.array_equal(d, compute_descriptor(noise(1), kind))
    assert d.shape == ({"tiny": 1024, "hog": 2048}[kind],)


def test_constant_images_share_a_descriptor():
    a = compute_descriptor(np.full((40, 40), 3, np.uint8))
    b = compute_descriptor(np.full((50, 64), 200, np.uint8))
    assert np.array_equal(a, b)
    assert np.all(np.isfinite(a))


def test_tiny_descriptor_is_affine_invariant():
    img = noise(2).astype(float)
    assert np.allclose(compute_descriptor(img), compute_descriptor(2 * img + 10), atol=1e-6)


def test_checkerboard_and_inverse_are_opposite():
    board = (np.indices((64, 64)).sum(axis=0) // 8 % 2) * 255.0
    a, b = compute_descriptor(board), compute_descriptor(255.0 - board)
    assert float(a @ b) == pytest.approx(-1.0, abs=1e-6)


def test_too_small_and_unknown_kind():
    with pytest.raises(ImageTooSmall):
        compute_descriptor(np.zeros((31, 64)))
    with pytest.raises(ValueError):
        compute_descriptor(noise(0), "netvlad")


def test_exact_match_ranks_first():
    _, db = small_db()
    top = query_top_k(db, db.descriptors[7], 1)
    assert top[0][0] == 7 and top[0][1] == pytest.approx(1.0, abs=1e-6)


def test_k_larger_than_database():
    _, db = small_db()
    res = query_top_k(db, compute_descriptor(noise(99)), 50)
    assert len(res) == len(db)
    sims = [s for _, s in res]
    assert sims == sorted(sims, reverse=True)
    assert all(-1.0 <= s <= 1.0 for s in sims)


def linear_scan(db, q, k):
    scored = [(-float(np.clip(db.descriptors[i] @ q, -1, 1)), i) for i in range(len(db))]
    return [(i, -s) for s, i in sorted(scored)[:k]]


def test_matches_linear_scan_with_ties():
    rng = np.random.default_rng(3)
    # Entries of +-1/4 keep every dot product exact, so ties are real ties.
    base = rng.choice([-0.25, 0.25], size=(5, 16))
    desc = np.vstack([base, base[::-1], base[:2]])
    db = RetrievalDatabase(desc, tuple(TimedPose(float(i), Pose.identity()) for i in range(len(desc))))
    for trial in range(50):
        q = rng.choice([-0.25, 0.25], size=16) if trial else desc[0]
        for k in (1, 3, 12):
            assert query_top_k(db, q, k) == linear_scan(db, q, k)


def test_empty_database_and_bad_k():
    db = RetrievalDatabase.build([], [])
    with pytest.raises(EmptyDatabase):
        query_top_k(db, np.zeros(1024), 1)
    _, db = small_db(3)
    with pytest.raises(ValueError):
        query_top_k(db, db.descriptors[0], 0)


@pytest.mark.parametrize("kind", ["tiny", "hog"])
def test_database_file_roundtrip(tmp_path, kind):
    _, db = small_db(kind=kind)
    save_database(db, tmp_path / "db.cvdb")
    back = load_database(tmp_path / "db.cvdb")
    assert back.kind == kind
    assert np.array_equal(back.descriptors, db.descriptors)
    for a, b in zip(back.poses, db.poses):
        assert a.timestamp == b.timestamp
        assert np.array_equal(a.pose.t, b.pose.t) and np.allclose(a.pose.q, b.pose.q, rtol=0, atol=1e-15)
    size = (tmp_path / "db.cvdb").stat().st_size
    D = db.descriptors.shape[1]
    assert size == 6 + 4 + 4 + 4 + 1 + len(db) * (4 + 4 * D + 8 + 56)


def test_database_file_errors(tmp_path):
    path = tmp_path / "db.cvdb"
    path.write_bytes(b"CVPM1\0" + bytes(13))
    with pytest.raises(BadMagic):
        load_database(path)
    _, db = small_db(3)
    save_database(db, path)
    data = path.read_bytes()
    path.write_bytes(data[:-1])
    with pytest.raises(CorruptIndex):
        load_database(path)
    # Duplicate image id in the second record.
    rec = (len(data) - 19) // 3
    broken = bytearray(data)
    broken[19 + rec : 19 + rec + 4] = (0).to_bytes(4, "little")
    path.write_bytes(bytes(broken))
    with pytest.raises(CorruptIndex):
        load_database(path)
