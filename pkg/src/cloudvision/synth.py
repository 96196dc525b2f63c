"""Deterministic synthetic worlds: textured rectangles, a ray-cast camera,
a 16-ring spinning LiDAR and closed-loop robot trajectories.

Everything here is a pure function of its specification and seed, which
makes the generated data usable as ground truth for the rest of the
package.  World frame is z-up.  The robot/LiDAR frame is x forward, y left,
z up; the camera frame is x right, y down, z forward.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidSpec
from .formats import LidarScan, TimedPose
from .geometry import CameraIntrinsics, Pose

# --- textures ----------------------------------------------------------------

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_PX = np.uint64(0x8CB92BA72F3D8DD7)
_PY = np.uint64(0xD6E8FEB86659FD93)


def _mix64(x: np.ndarray) -> np.ndarray:
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def _lattice(ix: np.ndarray, iy: np.ndarray, seed: np.ndarray) -> np.ndarray:
    h = seed.astype(np.uint64) * _GOLD
    h = h ^ (ix.astype(np.int64).view(np.uint64) * _PX)
    h = h ^ (iy.astype(np.int64).view(np.uint64) * _PY)
    h = _mix64(h)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def _fade(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def value_noise(x: np.ndarray, y: np.ndarray, seed: np.ndarray) -> np.ndarray:
    """Hash-based value noise in ``[0, 1]`` with C2 quintic interpolation."""
    ix = np.floor(x)
    iy = np.floor(y)
    fx = _fade(x - ix)
    fy = _fade(y - iy)
    ix = ix.astype(np.int64)
    iy = iy.astype(np.int64)
    n00 = _lattice(ix, iy, seed)
    n10 = _lattice(ix + 1, iy, seed)
    n01 = _lattice(ix, iy + 1, seed)
    n11 = _lattice(ix + 1, iy + 1, seed)
    top = n00 + fx * (n10 - n00)
    bottom = n01 + fx * (n11 - n01)
    return top + fy * (bottom - top)


# Octave wavelengths (m) and amplitudes of the procedural wall texture.
_OCTAVES = ((1.6, 0.45), (0.8, 0.3), (0.4, 0.18))
_CHECKER_PERIOD = 1.2
_CHECKER_AMP = 0.12
# Spread of the per-patch mean albedo around mid-grey.
_ALBEDO_SPREAD = 0.4


def _band_limit(wavelength: float, footprint) -> np.ndarray | float:
    # Gaussian pre-filter with sigma equal to the pixel footprint.
    if footprint is None:
        return 1.0
    return np.exp(-2.0 * (math.pi * footprint / wavelength) ** 2)


def texture(s: np.ndarray, t: np.ndarray, seed: np.ndarray, footprint=None) -> np.ndarray:
    """Texture intensity in ``[0, 1]`` at in-patch metric coordinates ``(s, t)``.

    ``footprint`` (metres per pixel on the surface) attenuates components the
    pixel grid cannot resolve, which keeps rendered images free of aliasing.
    """
    seed = np.asarray(seed, dtype=np.uint64)
    val = np.full(np.shape(s), 0.5)
    if _ALBEDO_SPREAD > 0:
        zero = np.zeros(np.shape(s), dtype=np.int64)
        val += _ALBEDO_SPREAD * (_lattice(zero, zero, seed * np.uint64(31) + np.uint64(77)) - 0.5)
    for k, (wavelength, amp) in enumerate(_OCTAVES):
        oct_seed = seed * np.uint64(31) + np.uint64(k + 1)
        noise = value_noise(s / wavelength, t / wavelength, oct_seed) - 0.5
        val += amp * _band_limit(wavelength, footprint) * noise
    w = 2.0 * math.pi / _CHECKER_PERIOD
    val += _CHECKER_AMP * _band_limit(_CHECKER_PERIOD, footprint) * np.sin(w * s) * np.sin(w * t)
    return np.clip(val, 0.0, 1.0)


# --- scene -------------------------------------------------------------------


@dataclass(frozen=True)
class Patch:
    corner: tuple[float, float, float]
    u: tuple[float, float, float]
    v: tuple[float, float, float]
    seed: int


@dataclass(frozen=True)
class SceneSpec:
    """Scene layout.

    ``kind`` is one of ``"room"`` (a single box), ``"two_rooms"`` (two boxes
    joined by a doorway in the shared wall) or ``"loop"`` (a rectangular ring
    corridor whose centerline is the rounded-rectangle robot path).
    """

    kind: str = "loop"
    room: tuple[float, float, float] = (6.0, 5.0, 3.0)
    door: tuple[float, float] = (1.0, 2.2)
    loop_length: float = 38.0
    aspect: float = 1.6
    corner_radius: float = 1.5
    corridor_width: float = 3.0
    height: float = 3.0
    patch_size: float = 50.0


class Scene:
    """Collection of textured rectangles with vectorised ray casting."""

    def __init__(self, patches: list[Patch], seed: int = 0, spec: SceneSpec | None = None):
        self.patches = list(patches)
        self.seed = int(seed)
        self.spec = spec
        P = len(self.patches)
        self.corners = np.array([p.corner for p in self.patches], dtype=np.float64).reshape(P, 3)
        self.U = np.array([p.u for p in self.patches], dtype=np.float64).reshape(P, 3)
        self.V = np.array([p.v for p in self.patches], dtype=np.float64).reshape(P, 3)
        self.seeds = np.array([p.seed for p in self.patches], dtype=np.uint64)
        normals = np.cross(self.U, self.V)
        if P and np.any(np.linalg.norm(normals, axis=1) == 0.0):
            raise InvalidSpec("patch edges must be non-zero and non-parallel")
        self.normals = normals
        self.uu = np.einsum("ij,ij->i", self.U, self.U)
        self.vv = np.einsum("ij,ij->i", self.V, self.V)
        self.uv = np.einsum("ij,ij->i", self.U, self.V)

    def __len__(self) -> int:
        return len(self.patches)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "spec": asdict(self.spec) if self.spec else None}

    def raycast(self, origin: np.ndarray, dirs: np.ndarray, max_t: float = np.inf, chunk: int = 65536):
        """First hit along ``origin + t * dirs`` for each direction.

        Returns ``(t, patch_index, s, tt)``: the ray parameter (``inf`` on a
        miss), the hit patch (``-1`` on a miss) and metric in-patch
        coordinates of the hit.
        """
        origin = np.asarray(origin, dtype=np.float64).reshape(3)
        dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
        n = dirs.shape[0]
        t_best = np.full(n, np.inf)
        idx = np.full(n, -1, dtype=np.intp)
        a_best = np.zeros(n)
        b_best = np.zeros(n)
        if len(self) == 0 or n == 0:
            return t_best, idx, a_best, b_best
        oc = origin - self.corners  # (P, 3)
        num = -np.einsum("ij,ij->i", oc, self.normals)
        ou = np.einsum("ij,ij->i", oc, self.U)
        ov = np.einsum("ij,ij->i", oc, self.V)
        det = self.uu * self.vv - self.uv * self.uv
        for start in range(0, n, chunk):
            d = dirs[start : start + chunk]
            dn = d @ self.normals.T
            with np.errstate(divide="ignore", invalid="ignore"):
                t = num / dn
                du = ou + t * (d @ self.U.T)
                dv = ov + t * (d @ self.V.T)
                # 2x2 Gram system, so skewed (non-orthogonal) edges work too.
                a = (self.vv * du - self.uv * dv) / det
                b = (self.uu * dv - self.uv * du) / det
            ok = (dn != 0.0) & (t > 1e-9) & (t <= max_t) & (a >= 0.0) & (a <= 1.0) & (b >= 0.0) & (b <= 1.0)
            t = np.where(ok, t, np.inf)
            j = np.argmin(t, axis=1)
            rows = np.arange(d.shape[0])
            tb = t[rows, j]
            hit = np.isfinite(tb)
            sl = slice(start, start + d.shape[0])
            t_best[sl] = tb
            idx[sl] = np.where(hit, j, -1)
            a_best[sl] = np.where(hit, a[rows, j], 0.0)
            b_best[sl] = np.where(hit, b[rows, j], 0.0)
        lu = np.sqrt(self.uu)
        lv = np.sqrt(self.vv)
        safe = np.maximum(idx, 0)
        return t_best, idx, a_best * lu[safe], b_best * lv[safe]

    def shade(self, idx: np.ndarray, s: np.ndarray, t: np.ndarray, footprint=None) -> np.ndarray:
        out = np.zeros(idx.shape)
        hit = idx >= 0
        if hit.any():
            fp = None if footprint is None else footprint[hit]
            out[hit] = texture(s[hit], t[hit], self.seeds[idx[hit]], fp)
        return out

    def footprint(self, dirs: np.ndarray, t: np.ndarray, idx: np.ndarray, pixel_angle: float) -> np.ndarray:
        """Approximate surface length covered by one pixel at each hit."""
        hit = idx >= 0
        out = np.zeros(idx.shape)
        if hit.any():
            d = dirs[hit]
            dist = t[hit] * np.linalg.norm(d, axis=1)
            n = self.normals[idx[hit]]
            cos = np.abs(np.einsum("ij,ij->i", d, n)) / (np.linalg.norm(d, axis=1) * np.linalg.norm(n, axis=1))
            out[hit] = dist * pixel_angle / np.maximum(cos, 0.05)
        return out

    def distance_to_surface(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance from each point to the nearest patch."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        best = np.full(pts.shape[0], np.inf)
        for p in range(len(self)):
            rel = pts - self.corners[p]
            a = np.clip(rel @ self.U[p] / self.uu[p], 0.0, 1.0)
            b = np.clip(rel @ self.V[p] / self.vv[p], 0.0, 1.0)
            # Exact for rectangles (orthogonal edges), which is all the generator emits.
            closest = self.corners[p] + a[:, None] * self.U[p] + b[:, None] * self.V[p]
            best = np.minimum(best, np.linalg.norm(pts - closest, axis=1))
        return best


def _tile(corner, u, v, size: float, rng: np.random.Generator) -> list[Patch]:
    corner = np.asarray(corner, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = max(1, math.ceil(np.linalg.norm(u) / size - 1e-9))
    nv = max(1, math.ceil(np.linalg.norm(v) / size - 1e-9))
    out = []
    for i in range(nu):
        for j in range(nv):
            c = corner + u * (i / nu) + v * (j / nv)
            seed = int(rng.integers(1, 2**62))
            out.append(Patch(tuple(c), tuple(u / nu), tuple(v / nv), seed))
    return out


def _box(x0, y0, z0, x1, y1, z1, size, rng, skip=()) -> list[Patch]:
    dx, dy, dz = x1 - x0, y1 - y0, z1 - z0
    faces = {
        "floor": ((x0, y0, z0), (dx, 0, 0), (0, dy, 0)),
        "ceiling": ((x0, y0, z1), (dx, 0, 0), (0, dy, 0)),
        "y0": ((x0, y0, z0), (dx, 0, 0), (0, 0, dz)),
        "y1": ((x0, y1, z0), (dx, 0, 0), (0, 0, dz)),
        "x0": ((x0, y0, z0), (0, dy, 0), (0, 0, dz)),
        "x1": ((x1, y0, z0), (0, dy, 0), (0, 0, dz)),
    }
    out = []
    for name, (c, u, v) in faces.items():
        if name not in skip:
            out.extend(_tile(c, u, v, size, rng))
    return out


def loop_half_extents(loop_length: float, aspect: float, corner_radius: float) -> tuple[float, float]:
    """Half extents ``(a, b)`` of the rounded-rectangle path with the given perimeter."""
    r = corner_radius
    b = (loop_length + 8.0 * r - 2.0 * math.pi * r) / (4.0 * (aspect + 1.0))
    a = aspect * b
    if b <= r or a <= r:
        raise InvalidSpec("loop too short for the requested corner radius")
    return a, b


def generate_scene(spec: SceneSpec = SceneSpec(), seed: int = 0) -> Scene:
    rng = np.random.default_rng(seed)
    size = spec.patch_size
    if size <= 0:
        raise InvalidSpec("patch_size must be positive")
    if spec.kind == "room":
        dx, dy, dz = spec.room
        if min(dx, dy, dz) <= 0:
            raise InvalidSpec("room dimensions must be positive")
        patches = _box(0, 0, 0, dx, dy, dz, size, rng)
    elif spec.kind == "two_rooms":
        dx, dy, dz = spec.room
        dw, dh = spec.door
        if min(dx, dy, dz, dw, dh) <= 0 or dw >= dy or dh >= dz:
            raise InvalidSpec("invalid two-room dimensions")
        patches = _box(0, 0, 0, dx, dy, dz, size, rng, skip=("x1",))
        patches += _box(dx, 0, 0, 2 * dx, dy, dz, size, rng, skip=("x0",))
        # Shared wall at x = dx with a doorway centered in y.
        y_a = 0.5 * (dy - dw)
        y_b = y_a + dw
        patches += _tile((dx, 0, 0), (0, y_a, 0), (0, 0, dz), size, rng)
        patches += _tile((dx, y_b, 0), (0, dy - y_b, 0), (0, 0, dz), size, rng)
        patches += _tile((dx, y_a, dh), (0, dw, 0), (0, 0, dz - dh), size, rng)
    elif spec.kind == "loop":
        a, b = loop_half_extents(spec.loop_length, spec.aspect, spec.corner_radius)
        hw = 0.5 * spec.corridor_width
        h = spec.height
        if hw <= 0 or h <= 0 or b - hw <= 0:
            raise InvalidSpec("corridor does not fit inside the loop")
        ox, oy = a + hw, b + hw  # outer wall half extents
        ix, iy = a - hw, b - hw  # inner block half extents
        patches = []
        for x0, y0, x1, y1 in (
            (-ox, -oy, ox, -iy),  # south strip
            (-ox, iy, ox, oy),  # north strip
            (-ox, -iy, -ix, iy),  # west strip
            (ix, -iy, ox, iy),  # east strip
        ):
            for z in (0.0, h):
                patches += _tile((x0, y0, z), (x1 - x0, 0, 0), (0, y1 - y0, 0), size, rng)
        for sx, sy in ((ox, oy), (ix, iy)):
            patches += _tile((-sx, -sy, 0), (2 * sx, 0, 0), (0, 0, h), size, rng)
            patches += _tile((-sx, sy, 0), (2 * sx, 0, 0), (0, 0, h), size, rng)
            patches += _tile((-sx, -sy, 0), (0, 2 * sy, 0), (0, 0, h), size, rng)
            patches += _tile((sx, -sy, 0), (0, 2 * sy, 0), (0, 0, h), size, rng)
    else:
        raise InvalidSpec(f"unknown scene kind {spec.kind!r}")
    return Scene(patches, seed, spec)


# --- sensors -----------------------------------------------------------------


def camera_rays(K: CameraIntrinsics) -> np.ndarray:
    """Camera-frame ray directions with unit z, row-major over pixels."""
    u, v = np.meshgrid(np.arange(K.width, dtype=np.float64), np.arange(K.height, dtype=np.float64))
    d = np.stack(((u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)), axis=-1)
    return d.reshape(-1, 3)


def render_depth(scene: Scene, pose: Pose, K: CameraIntrinsics):
    """Per-pixel z-depth (``inf`` on miss) plus the hit data used for shading."""
    d_cam = camera_rays(K)
    d_world = d_cam @ pose.R.T
    t, idx, s, tt = scene.raycast(pose.t, d_world)
    return t.reshape(K.height, K.width), idx, s, tt


def render_image(scene: Scene, pose: Pose, K: CameraIntrinsics, antialias: bool = True) -> np.ndarray:
    """Ray-cast 8-bit grayscale image; pixels without a hit are 0.

    With ``antialias`` the texture is band-limited to the pixel footprint.
    """
    d_world = camera_rays(K) @ pose.R.T
    t, idx, s, tt = scene.raycast(pose.t, d_world)
    fp = None
    if antialias:
        # Angular pixel size, accounting for off-axis rays being longer.
        fp = scene.footprint(d_world, t, idx, 1.0 / math.sqrt(K.fx * K.fy))
    val = scene.shade(idx, s, tt, fp)
    img = np.rint(val * 255.0).astype(np.uint8)
    return img.reshape(K.height, K.width)


@dataclass(frozen=True)
class LidarPattern:
    ring_elevations: tuple[float, ...] = tuple(float(e) for e in range(-15, 16, 2))
    azimuth_step: float = 0.4
    max_range: float = 100.0

    def __post_init__(self) -> None:
        if len(self.ring_elevations) < 1 or np.any(np.diff(self.ring_elevations) <= 0):
            raise InvalidSpec("ring elevations must be strictly increasing")
        if not (0 < self.azimuth_step <= 360) or self.max_range <= 0:
            raise InvalidSpec("invalid azimuth step or range")

    def directions(self) -> np.ndarray:
        az = np.radians(np.arange(0.0, 360.0, self.azimuth_step))
        el = np.radians(np.asarray(self.ring_elevations))
        E, A = np.meshgrid(el, az, indexing="ij")
        d = np.stack((np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)), axis=-1)
        return d.reshape(-1, 3)


def simulate_scan(
    scene: Scene,
    pose: Pose,
    pattern: LidarPattern = LidarPattern(),
    timestamp: float = 0.0,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> LidarScan:
    """First-hit LiDAR returns in the sensor frame; misses are omitted."""
    d_sensor = pattern.directions()
    t, idx, _, _ = scene.raycast(pose.t, d_sensor @ pose.R.T, max_t=pattern.max_range)
    hit = idx >= 0
    rng_ = t[hit]
    if noise_sigma > 0:
        rng_ = rng_ + np.random.default_rng(seed).normal(0.0, noise_sigma, size=rng_.shape)
    return LidarScan(timestamp, d_sensor[hit] * rng_[:, None])


# --- trajectories ------------------------------------------------------------

# Camera mounted slightly ahead of and below the LiDAR, looking forward.
CAMERA_IN_LIDAR = Pose.from_rt(
    np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]),
    (0.10, 0.0, -0.15),
)


@dataclass(frozen=True)
class TrajectorySpec:
    loop_length: float = 38.0
    n_db: int = 30
    n_queries: int = 100
    aspect: float = 1.6
    corner_radius: float = 1.5
    scan_spacing: float = 0.1
    speed: float = 1.0
    lidar_height: float = 1.0
    lateral_max: float = 0.5
    heading_max_deg: float = 3.0
    tilt_max_deg: float = 1.0
    query_time_offset: float = 10000.0
    camera_in_lidar: Pose = field(default=CAMERA_IN_LIDAR, compare=False)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "camera_in_lidar"}
        d["camera_in_lidar"] = list(self.camera_in_lidar.to_tum())
        return d


class LoopPath:
    """Counter-clockwise rounded rectangle centered at the origin, by arc length."""

    def __init__(self, loop_length: float, aspect: float, corner_radius: float):
        self.a, self.b = loop_half_extents(loop_length, aspect, corner_radius)
        self.r = corner_radius
        a, b, r = self.a, self.b, self.r
        sx, sy = 2 * (a - r), 2 * (b - r)
        arc = 0.5 * math.pi * r
        # (length, kind, data): straights start at a point with a heading, arcs
        # start at an angle around a center.
        self.segments = [
            (sx / 2, "line", (0.0, -b, 0.0)),
            (arc, "arc", ((a - r, -b + r), -0.5 * math.pi)),
            (sy, "line", (a, -b + r, 0.5 * math.pi)),
            (arc, "arc", ((a - r, b - r), 0.0)),
            (sx, "line", (a - r, b, math.pi)),
            (arc, "arc", ((-a + r, b - r), 0.5 * math.pi)),
            (sy, "line", (-a, b - r, 1.5 * math.pi)),
            (arc, "arc", ((-a + r, -b + r), math.pi)),
            (sx / 2, "line", (-a + r, -b, 0.0)),
        ]
        self.length = sum(seg[0] for seg in self.segments)

    def at(self, s: float) -> tuple[np.ndarray, float]:
        """Position ``(x, y)`` and heading (rad) at arc length ``s``."""
        if s < 0.0 or s > self.length:
            s %= self.length
        last = len(self.segments) - 1
        for i, (length, kind, data) in enumerate(self.segments):
            if s <= length or i == last:
                if kind == "line":
                    x0, y0, h = data
                    return np.array([x0 + s * math.cos(h), y0 + s * math.sin(h)]), h
                (cx, cy), ang0 = data
                ang = ang0 + s / self.r
                return np.array([cx + self.r * math.cos(ang), cy + self.r * math.sin(ang)]), ang + 0.5 * math.pi
            s -= length
        raise AssertionError("unreachable")


def _robot_pose(xy: np.ndarray, heading: float, height: float, roll=0.0, pitch=0.0) -> Pose:
    yaw = Pose.from_rotvec((0.0, 0.0, heading))
    tilt = Pose.from_rotvec((roll, 0.0, 0.0)) @ Pose.from_rotvec((0.0, pitch, 0.0))
    return Pose((yaw @ tilt).q, (xy[0], xy[1], height))


def generate_trajectory(spec: TrajectorySpec = TrajectorySpec(), seed: int = 0):
    """Closed-loop LiDAR trajectory, database camera poses and query camera poses.

    Returns ``(lidar_traj, db_poses, query_poses)``: world-from-LiDAR poses at
    every scan, world-from-camera database poses spaced uniformly by arc
    length, and world-from-camera query poses offset laterally and in
    heading/tilt by uniform perturbations within the configured bounds.
    """
    if min(spec.loop_length, spec.scan_spacing, spec.speed) <= 0 or spec.n_db < 1 or spec.n_queries < 0:
        raise InvalidSpec("trajectory spec values must be positive")
    path = LoopPath(spec.loop_length, spec.aspect, spec.corner_radius)
    L = path.length
    cam = spec.camera_in_lidar

    n_scan = max(2, int(round(L / spec.scan_spacing)))
    lidar_traj = []
    for i in range(n_scan + 1):
        s = L * i / n_scan
        xy, h = path.at(s)
        lidar_traj.append(TimedPose(s / spec.speed, _robot_pose(xy, h, spec.lidar_height)))

    db_poses = []
    for k in range(spec.n_db):
        s = L * k / spec.n_db
        xy, h = path.at(s)
        db_poses.append(TimedPose(s / spec.speed, _robot_pose(xy, h, spec.lidar_height) @ cam))

    rng = np.random.default_rng(seed)
    n_q = spec.n_queries
    jitter = rng.uniform(-0.25, 0.25, n_q)
    lateral = rng.uniform(-spec.lateral_max, spec.lateral_max, n_q)
    dheading = np.radians(rng.uniform(-spec.heading_max_deg, spec.heading_max_deg, n_q))
    roll = np.radians(rng.uniform(-spec.tilt_max_deg, spec.tilt_max_deg, n_q))
    pitch = np.radians(rng.uniform(-spec.tilt_max_deg, spec.tilt_max_deg, n_q))
    query_poses = []
    for j in range(n_q):
        s = L * (j + 0.5 + jitter[j]) / n_q
        xy, h = path.at(s)
        left = np.array([-math.sin(h), math.cos(h)])
        robot = _robot_pose(xy + lateral[j] * left, h + dheading[j], spec.lidar_height, roll[j], pitch[j])
        query_poses.append(TimedPose(spec.query_time_offset + j, robot @ cam))
    return lidar_traj, db_poses, query_poses


# --- full dataset ------------------------------------------------------------


DEFAULT_INTRINSICS = CameraIntrinsics(fx=200.0, fy=200.0, cx=159.5, cy=119.5, width=320, height=240)


@dataclass(eq=False)
class SynthDataset:
    scene: Scene
    K: CameraIntrinsics
    camera_in_lidar: Pose
    lidar_traj: list[TimedPose]
    scans: list[LidarScan]
    db_poses: list[TimedPose]
    db_images: list[np.ndarray]
    query_poses: list[TimedPose]
    query_images: list[np.ndarray]
    seed: int = 0

    @property
    def extrinsic(self) -> Pose:
        """Camera-from-LiDAR transform consumed by map building."""
        return self.camera_in_lidar.inverse()


def generate_dataset(
    scene_spec: SceneSpec = SceneSpec(),
    traj_spec: TrajectorySpec = TrajectorySpec(),
    K: CameraIntrinsics = DEFAULT_INTRINSICS,
    pattern: LidarPattern = LidarPattern(),
    seed: int = 0,
    scan_noise: float = 0.0,
) -> SynthDataset:
    scene = generate_scene(scene_spec, seed)
    lidar_traj, db_poses, query_poses = generate_trajectory(traj_spec, seed)
    # The closing pose duplicates the start; scan every pose but that one.
    scans = [
        simulate_scan(scene, tp.pose, pattern, tp.timestamp, scan_noise, seed + i)
        for i, tp in enumerate(lidar_traj[:-1])
    ]
    db_images = [render_image(scene, tp.pose, K) for tp in db_poses]
    query_images = [render_image(scene, tp.pose, K) for tp in query_poses]
    return SynthDataset(
        scene, K, traj_spec.camera_in_lidar, lidar_traj, scans, db_poses, db_images, query_poses, query_images, seed
    )
