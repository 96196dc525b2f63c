"""LiDAR map assembly with a per-database-image co-visibility index.

Scans are placed in the world with an interpolated LiDAR trajectory, each
scan is associated with the temporally nearest database image, and a point
is tagged with that image when it projects validly into the image's camera.
A voxel grid then merges points into centroids, uniting their tags.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, CorruptIndex, EmptyInput, TimestampOutOfRange, UnknownImageId
from .formats import LidarScan, TimedPose
from .geometry import Z_MIN, CameraIntrinsics, Pose, interpolate_pose, project

__all__ = [
    "IndexedMap",
    "LidarScan",
    "TimedPose",
    "build_indexed_map",
    "covisible_points",
    "voxel_downsample",
    "save_map",
    "load_map",
    "interpolate_trajectory",
]

DEFAULT_VOXEL = 0.05
COVIS_MAX_RANGE = 30.0
MAX_SCAN_RANGE = 100.0
MAP_MAGIC = b"CVPM1\0"
MAP_VERSION = 1
_SPLAT_MAX = 6  # px


@dataclass(frozen=True, eq=False)
class IndexedMap:
    points: np.ndarray  # (N, 3) world frame
    covis: tuple[np.ndarray, ...]  # per image: ascending point indices
    voxel_size: float

    @property
    def image_count(self) -> int:
        return len(self.covis)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, IndexedMap):
            return NotImplemented
        return (
            self.voxel_size == other.voxel_size
            and np.array_equal(self.points, other.points)
            and len(self.covis) == len(other.covis)
            and all(np.array_equal(a, b) for a, b in zip(self.covis, other.covis))
        )

    def validate(self) -> None:
        n = len(self)
        seen = np.zeros(n, dtype=bool)
        for m, idx in enumerate(self.covis):
            if idx.size and (idx.max() >= n or np.any(np.diff(idx.astype(np.int64)) <= 0)):
                raise CorruptIndex(f"co-visibility list {m} is out of range or not ascending")
            seen[idx] = True
        if not seen.all():
            raise CorruptIndex(f"{int((~seen).sum())} points have no co-visible image")


def interpolate_trajectory(traj: list[TimedPose], timestamp: float) -> Pose:
    """Pose at ``timestamp``: translation lerp and rotation slerp between neighbours."""
    times = np.array([tp.timestamp for tp in traj])
    if timestamp < times[0] or timestamp > times[-1]:
        raise TimestampOutOfRange(f"t={timestamp} outside [{times[0]}, {times[-1]}]")
    i = int(np.searchsorted(times, timestamp, side="right")) - 1
    if i >= len(traj) - 1:
        return traj[-1].pose
    t0, t1 = times[i], times[i + 1]
    alpha = (timestamp - t0) / (t1 - t0)
    if alpha == 0.0:
        return traj[i].pose
    return interpolate_pose(traj[i].pose, traj[i + 1].pose, alpha)


def _voxel_keys(points: np.ndarray, voxel_size: float) -> np.ndarray:
    """Integer voxel coordinates ``floor(p / voxel_size)``."""
    return np.floor(points / voxel_size).astype(np.int64)


def _group_voxels(points: np.ndarray, voxel_size: float):
    """Return ``(inverse, n_voxels)`` with voxels ordered lexicographically by key."""
    keys = _voxel_keys(points, voxel_size)
    lo = keys.min(axis=0)
    span = keys.max(axis=0) - lo + 1
    if np.all(span < 2**21):
        k = keys - lo
        packed = (k[:, 0] << 42) | (k[:, 1] << 21) | k[:, 2]
        _, inverse = np.unique(packed, return_inverse=True)
    else:
        _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    return inverse, int(inverse.max()) + 1


def _centroids(points: np.ndarray, inverse: np.ndarray, n_vox: int) -> np.ndarray:
    counts = np.bincount(inverse, minlength=n_vox).astype(np.float64)
    out = np.empty((n_vox, 3))
    for k in range(3):
        out[:, k] = np.bincount(inverse, weights=points[:, k], minlength=n_vox) / counts
    return out


def _downsample_tagged(points: np.ndarray, tags: np.ndarray, voxel_size: float, n_images: int):
    """Voxel grid over single-tag points (tag ``-1`` = untagged).

    Returns centroids of voxels with at least one tag, and per-image sorted
    index arrays into those centroids.
    """
    inverse, n_vox = _group_voxels(points, voxel_size)
    cent = _centroids(points, inverse, n_vox)
    tagged = tags >= 0
    pair = np.unique(inverse[tagged].astype(np.int64) * n_images + tags[tagged])
    vox = pair // n_images
    img = pair % n_images
    keep = np.zeros(n_vox, dtype=bool)
    keep[vox] = True
    remap = np.cumsum(keep) - 1
    new_vox = remap[vox]
    order = np.lexsort((new_vox, img))
    img_sorted = img[order]
    vox_sorted = new_vox[order]
    bounds = np.searchsorted(img_sorted, np.arange(n_images + 1))
    covis = tuple(vox_sorted[bounds[m] : bounds[m + 1]].astype(np.int64) for m in range(n_images))
    return cent[keep], covis


def voxel_downsample(points, covis_tags, voxel_size: float):
    """Replace the points of each occupied voxel by their centroid.

    ``covis_tags`` holds one set of image ids per point; each output point
    carries the union of its members' sets.  Output is ordered by voxel key.
    """
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        return pts.copy(), []
    inverse, n_vox = _group_voxels(pts, voxel_size)
    cent = _centroids(pts, inverse, n_vox)
    tags: list[set] = [set() for _ in range(n_vox)]
    for i, t in zip(inverse.tolist(), covis_tags):
        tags[i].update(t)
    return cent, tags


def _tag_scan_points(
    world_pts: np.ndarray,
    cam_from_world: Pose,
    K: CameraIntrinsics,
    covis_max_range: float,
) -> np.ndarray:
    p_cam = cam_from_world.apply(world_pts)
    _, _, valid = project(K, p_cam, Z_MIN)
    return valid & (np.linalg.norm(p_cam, axis=1) <= covis_max_range)


def _zbuffer_filter(
    points: np.ndarray, idx: np.ndarray, cam_from_world: Pose, K: CameraIntrinsics, voxel: float, tol: float
) -> np.ndarray:
    """Drop indexed points lying behind nearer map points.

    Each point is splatted as a square covering its voxel's image footprint
    (capped at ``_SPLAT_MAX`` px), so sparse surfaces still hide what is
    behind them.
    """
    if idx.size == 0:
        return idx
    p_cam = cam_from_world.apply(points[idx])
    uv, _, _ = project(K, p_cam)
    z = p_cam[:, 2]
    u = np.rint(uv[:, 0]).astype(np.int64)
    v = np.rint(uv[:, 1]).astype(np.int64)
    radius = np.minimum(np.ceil(0.5 * voxel * max(K.fx, K.fy) / z), _SPLAT_MAX).astype(np.int64)
    depth = np.full(K.width * K.height, np.inf)
    R = int(radius.max())
    for dv in range(-R, R + 1):
        for du in range(-R, R + 1):
            m = (radius >= max(abs(du), abs(dv))) & (u + du >= 0) & (u + du < K.width)
            m &= (v + dv >= 0) & (v + dv < K.height)
            np.minimum.at(depth, (v[m] + dv) * K.width + u[m] + du, z[m])
    return idx[z <= depth[v * K.width + u] + tol]


def build_indexed_map(
    scans: list[LidarScan],
    lidar_traj: list[TimedPose],
    db_poses: list[TimedPose],
    K: CameraIntrinsics,
    extrinsic: Pose,
    voxel_size: float = DEFAULT_VOXEL,
    covis_max_range: float = COVIS_MAX_RANGE,
    max_range: float = MAX_SCAN_RANGE,
    zbuffer: bool = False,
    db_frame: str = "camera",
) -> IndexedMap:
    """Assemble the co-visibility indexed map.

    ``db_poses`` are the database image poses (image id = list index).  With
    ``db_frame="camera"`` they are world-from-camera; with ``"lidar"`` they
    are world-from-LiDAR and ``extrinsic`` (camera-from-LiDAR) turns them
    into camera poses.  ``zbuffer`` re-checks every tag against a per-pixel
    depth buffer of the map itself.
    """
    if not scans or not lidar_traj or not db_poses:
        raise EmptyInput("scans, trajectory and database poses must be non-empty")
    t0, t1 = lidar_traj[0].timestamp, lidar_traj[-1].timestamp
    for scan in scans:
        if not (t0 <= scan.timestamp <= t1):
            raise TimestampOutOfRange(f"scan at t={scan.timestamp} outside trajectory [{t0}, {t1}]")
    db_times = np.array([tp.timestamp for tp in db_poses])
    if db_frame == "lidar":
        cams_from_world = [(tp.pose @ extrinsic.inverse()).inverse() for tp in db_poses]
    elif db_frame == "camera":
        cams_from_world = [tp.pose.inverse() for tp in db_poses]
    else:
        raise ValueError(f"unknown db_frame {db_frame!r}")
    n_images = len(db_poses)

    all_pts = []
    all_tags = []
    for scan in scans:
        pts = scan.points
        if pts.shape[0] == 0:
            continue
        pts = pts[np.linalg.norm(pts, axis=1) <= max_range]
        world = interpolate_trajectory(lidar_traj, scan.timestamp).apply(pts)
        m = int(np.argmin(np.abs(db_times - scan.timestamp)))
        valid = _tag_scan_points(world, cams_from_world[m], K, covis_max_range)
        all_pts.append(world)
        all_tags.append(np.where(valid, m, -1))
    if not all_pts:
        return IndexedMap(np.zeros((0, 3)), tuple(np.zeros(0, np.int64) for _ in range(n_images)), voxel_size)
    points = np.concatenate(all_pts)
    tags = np.concatenate(all_tags)
    cent, covis = _downsample_tagged(points, tags, voxel_size, n_images)
    if zbuffer:
        covis = tuple(
            _zbuffer_filter(cent, idx, cams_from_world[m], K, voxel_size, 2.0 * voxel_size) for m, idx in enumerate(covis)
        )
        cent, covis = _drop_orphans(cent, covis)
    return IndexedMap(cent, covis, voxel_size)


def _drop_orphans(points: np.ndarray, covis):
    used = np.zeros(points.shape[0], dtype=bool)
    for idx in covis:
        used[idx] = True
    if used.all():
        return points, covis
    remap = np.cumsum(used) - 1
    return points[used], tuple(remap[idx] for idx in covis)


def covisible_points(map_: IndexedMap, image_id: int):
    """``(indices, points)`` co-visible from database image ``image_id``."""
    if not 0 <= image_id < map_.image_count:
        raise UnknownImageId(image_id)
    idx = map_.covis[image_id]
    return idx, map_.points[idx]


# --- map file ----------------------------------------------------------------

_HEADER = struct.Struct("<6sIdII")


def map_file_size(map_: IndexedMap) -> int:
    return _HEADER.size + 24 * len(map_) + sum(4 + 4 * idx.size for idx in map_.covis)


def save_map(map_: IndexedMap, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAP_MAGIC, MAP_VERSION, map_.voxel_size, len(map_), map_.image_count))
        fh.write(np.ascontiguousarray(map_.points, dtype="<f8").tobytes())
        for idx in map_.covis:
            fh.write(struct.pack("<I", idx.size))
            fh.write(np.ascontiguousarray(idx, dtype="<u4").tobytes())


def load_map(path) -> IndexedMap:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:6] != MAP_MAGIC:
        raise BadMagic(f"{path}: not a map file")
    _, version, voxel, n, m = _HEADER.unpack_from(data, 0)
    if version != MAP_VERSION:
        raise BadMagic(f"{path}: unsupported map version {version}")
    pos = _HEADER.size
    if len(data) < pos + 24 * n:
        raise CorruptIndex(f"{path}: truncated point block")
    points = np.frombuffer(data, dtype="<f8", count=3 * n, offset=pos).reshape(n, 3).astype(np.float64)
    pos += 24 * n
    covis = []
    for _ in range(m):
        if len(data) < pos + 4:
            raise CorruptIndex(f"{path}: truncated index block")
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if len(data) < pos + 4 * count:
            raise CorruptIndex(f"{path}: truncated index block")
        idx = np.frombuffer(data, dtype="<u4", count=count, offset=pos).astype(np.int64)
        pos += 4 * count
        if idx.size and (idx.max() >= n or np.any(np.diff(idx) <= 0)):
            raise CorruptIndex(f"{path}: index out of bounds or unsorted")
        covis.append(idx)
    if pos != len(data):
        raise CorruptIndex(f"{path}: {len(data) - pos} trailing bytes")
    return IndexedMap(points, tuple(covis), float(voxel))
