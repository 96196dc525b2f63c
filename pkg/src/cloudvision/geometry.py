"""Rigid transforms, the pinhole camera, and pose-error metrics.

Conventions used throughout the package:

* A :class:`Pose` is world-from-camera (or world-from-sensor): ``apply`` maps
  points expressed in the camera frame into the world frame, and the camera
  center in world coordinates is ``pose.t``.
* Quaternions are stored ``(w, x, y, z)`` with ``w >= 0``.
* Twists are translation-first, ``xi = (rho, phi)``.
* Pose updates are left-multiplicative: ``se3_exp(delta) @ pose``.
* Camera frame: x right, y down, z forward.  Pixel ``(0, 0)`` is the center
  of the top-left pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AngleNearPi

Z_MIN = 0.05
_SMALL_ANGLE = 1e-4


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that ``hat(a) @ b == cross(a, b)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def hat_many(v: np.ndarray) -> np.ndarray:
    """Batched :func:`hat` for an ``(N, 3)`` array."""
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


# --- quaternions -------------------------------------------------------------


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return q


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    wa, va = a[0], a[1:]
    wb, vb = b[0], b[1:]
    w = wa * wb - np.dot(va, vb)
    v = wa * vb + wb * va + np.cross(va, vb)
    return np.concatenate(([w], v))


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; picks the numerically largest pivot."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    diag = np.diag(R)
    k = int(np.argmax([tr, *diag]))
    if k == 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return quat_normalize(np.array(q))


def quat_from_rotvec(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    theta = float(np.linalg.norm(phi))
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        k = 0.5 - t2 / 48.0 + t2 * t2 / 3840.0
        w = 1.0 - t2 / 8.0 + t2 * t2 / 384.0
    else:
        k = math.sin(0.5 * theta) / theta
        w = math.cos(0.5 * theta)
    return quat_normalize(np.concatenate(([w], k * phi)))


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    q = quat_normalize(q)
    v = q[1:]
    s = float(np.linalg.norm(v))
    if s < 1e-12:
        # 2*asin(s)/s -> 2 as s -> 0; q[0] ~ 1 here.
        return 2.0 * v / q[0]
    theta = 2.0 * math.atan2(s, q[0])
    return theta / s * v


def quat_angle(q: np.ndarray) -> float:
    """Rotation angle in radians, in ``[0, pi]``."""
    return 2.0 * math.atan2(float(np.linalg.norm(q[1:])), abs(float(q[0])))


def quat_slerp(a: np.ndarray, b: np.ndarray, alpha: float) -> np.ndarray:
    d = float(np.dot(a, b))
    if d < 0.0:
        b = -b
        d = -d
    if d > 1.0 - 1e-12:
        return quat_normalize(a + alpha * (b - a))
    omega = math.acos(min(d, 1.0))
    so = math.sin(omega)
    return quat_normalize(
        (math.sin((1.0 - alpha) * omega) / so) * a + (math.sin(alpha * omega) / so) * b
    )


# --- poses -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``(R, t)`` stored as a unit quaternion and translation."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self) -> None:
        q = quat_normalize(self.q)
        t = np.array(self.t, dtype=np.float64).reshape(3)
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_rt(cls, R: np.ndarray, t) -> Pose:
        return cls(matrix_to_quat(R), np.asarray(t, dtype=np.float64))

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> Pose:
        T = np.asarray(T, dtype=np.float64)
        return cls.from_rt(T[:3, :3], T[:3, 3])

    @classmethod
    def from_rotvec(cls, phi, t=(0.0, 0.0, 0.0)) -> Pose:
        return cls(quat_from_rotvec(np.asarray(phi, dtype=np.float64)), np.asarray(t, dtype=np.float64))

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    @property
    def center(self) -> np.ndarray:
        return self.t

    def to_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def compose(self, other: Pose) -> Pose:
        return Pose(quat_multiply(self.q, other.q), self.R @ other.t + self.t)

    __matmul__ = compose

    def inverse(self) -> Pose:
        qi = quat_conjugate(self.q)
        return Pose(qi, -(quat_to_matrix(qi) @ self.t))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform ``(3,)`` or ``(N, 3)`` points."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.R.T + self.t

    def angle(self) -> float:
        return quat_angle(self.q)

    def to_tum(self) -> tuple[float, ...]:
        """``(tx, ty, tz, qx, qy, qz, qw)``."""
        w, x, y, z = self.q
        return (*map(float, self.t), float(x), float(y), float(z), float(w))

    @classmethod
    def from_tum(cls, values) -> Pose:
        tx, ty, tz, qx, qy, qz, qw = (float(v) for v in values)
        return cls(np.array([qw, qx, qy, qz]), np.array([tx, ty, tz]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.q, other.q) and np.array_equal(self.t, other.t))

    def __hash__(self) -> int:
        return hash((self.q.tobytes(), self.t.tobytes()))

    def __repr__(self) -> str:
        return f"Pose(q={np.array2string(self.q, precision=6)}, t={np.array2string(self.t, precision=6)})"


def interpolate_pose(a: Pose, b: Pose, alpha: float) -> Pose:
    """Linear interpolation in translation, slerp in rotation."""
    return Pose(quat_slerp(a.q, b.q, alpha), (1.0 - alpha) * a.t + alpha * b.t)


@dataclass(frozen=True)
class Twist:
    rho: np.ndarray
    phi: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=np.float64).reshape(3))
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=np.float64).reshape(3))

    @classmethod
    def from_vector(cls, xi) -> Twist:
        xi = np.asarray(xi, dtype=np.float64).reshape(6)
        return cls(xi[:3], xi[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate((self.rho, self.phi))


def so3_left_jacobian(phi: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(phi))
    Phi = hat(phi)
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        a = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        b = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    else:
        a = 2.0 * math.sin(0.5 * theta) ** 2 / (theta * theta)
        b = (theta - math.sin(theta)) / theta**3
    return np.eye(3) + a * Phi + b * (Phi @ Phi)


def so3_left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(phi))
    Phi = hat(phi)
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        c = 1.0 / (theta * theta) - (1.0 + math.cos(theta)) / (2.0 * theta * math.sin(theta))
    return np.eye(3) - 0.5 * Phi + c * (Phi @ Phi)


def se3_exp(xi) -> Pose:
    """Closed-form SE(3) exponential of a translation-first twist."""
    if not isinstance(xi, Twist):
        xi = Twist.from_vector(xi)
    q = quat_from_rotvec(xi.phi)
    t = so3_left_jacobian(xi.phi) @ xi.rho
    return Pose(q, t)


def se3_log(P: Pose) -> Twist:
    angle = P.angle()
    if angle >= math.pi - 1e-6:
        raise AngleNearPi(f"rotation angle {angle:.9f} rad is too close to pi")
    phi = quat_to_rotvec(P.q)
    rho = so3_left_jacobian_inv(phi) @ P.t
    return Twist(rho, phi)


# --- camera ------------------------------------------------------------------


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def downscaled(self, factor: int) -> CameraIntrinsics:
        """Intrinsics of an image decimated by ``factor`` (pixel ``i`` -> ``i / factor``)."""
        return CameraIntrinsics(
            self.fx / factor,
            self.fy / factor,
            self.cx / factor,
            self.cy / factor,
            -(-self.width // factor),
            -(-self.height // factor),
        )


def project(K: CameraIntrinsics, p_cam: np.ndarray, z_min: float = Z_MIN):
    """Pinhole projection with its analytic Jacobian.

    Accepts a single point ``(3,)`` or a batch ``(N, 3)``.  Returns
    ``(uv, J, valid)`` where ``J = d uv / d p_cam`` is ``(2, 3)`` per point and
    ``valid`` is false for points with ``z <= z_min`` or outside the image.
    """
    p = np.asarray(p_cam, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    front = z > z_min
    zs = np.where(front, z, 1.0)
    inv_z = 1.0 / zs
    u = K.fx * x * inv_z + K.cx
    v = K.fy * y * inv_z + K.cy
    uv = np.stack((u, v), axis=1)
    J = np.zeros((p.shape[0], 2, 3))
    J[:, 0, 0] = K.fx * inv_z
    J[:, 0, 2] = -K.fx * x * inv_z * inv_z
    J[:, 1, 1] = K.fy * inv_z
    J[:, 1, 2] = -K.fy * y * inv_z * inv_z
    valid = front & (u >= 0.0) & (u <= K.width - 1) & (v >= 0.0) & (v <= K.height - 1)
    if single:
        return uv[0], J[0], bool(valid[0])
    return uv, J, valid


def pose_error(est: Pose, gt: Pose) -> tuple[float, float]:
    """Translation error (m) between camera centers and rotation error (deg)."""
    trans = float(np.linalg.norm(est.t - gt.t))
    wa, va = est.q[0], est.q[1:]
    wb, vb = gt.q[0], gt.q[1:]
    # Written so that swapping the arguments negates v exactly.
    w = wa * wb + np.dot(va, vb)
    v = (wa * vb - wb * va) - np.cross(va, vb)
    rot = math.degrees(2.0 * math.atan2(float(np.linalg.norm(v)), abs(float(w))))
    return trans, rot


# --- intrinsics file ---------------------------------------------------------

_INTRINSIC_KEYS = ("fx", "fy", "cx", "cy", "width", "height")


def load_intrinsics(path) -> CameraIntrinsics:
    values: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if len(parts) >= 2 and parts[0] in _INTRINSIC_KEYS:
            values[parts[0]] = parts[1]
    missing = [k for k in _INTRINSIC_KEYS if k not in values]
    if missing:
        raise ValueError(f"{path}: missing intrinsics keys {missing}")
    return CameraIntrinsics(
        float(values["fx"]),
        float(values["fy"]),
        float(values["cx"]),
        float(values["cy"]),
        int(values["width"]),
        int(values["height"]),
    )


def save_intrinsics(K: CameraIntrinsics, path) -> None:
    lines = [f"{key} {getattr(K, key)!r}" for key in _INTRINSIC_KEYS]
    Path(path).write_text("\n".join(lines) + "\n")
