"""Plain file formats: TUM trajectories, binary PGM images, LiDAR scan files."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic
from .geometry import Pose


@dataclass(frozen=True)
class TimedPose:
    timestamp: float
    pose: Pose


@dataclass(frozen=True, eq=False)
class LidarScan:
    timestamp: float
    points: np.ndarray  # (N, 3) sensor frame, meters

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)


# --- TUM ---------------------------------------------------------------------


def format_tum_line(tp: TimedPose) -> str:
    fields = (tp.timestamp, *tp.pose.to_tum())
    return " ".join(repr(float(f)) for f in fields)


def write_tum(path, trajectory) -> None:
    text = "".join(format_tum_line(tp) + "\n" for tp in trajectory)
    Path(path).write_text(text)


def read_tum(path) -> list[TimedPose]:
    """Read ``timestamp tx ty tz qx qy qz qw`` lines; ``#`` starts a comment."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 8:
            raise ValueError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        out.append(TimedPose(float(parts[0]), Pose.from_tum(parts[1:])))
    return out


# --- PGM ---------------------------------------------------------------------


def write_pgm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary (P5) PGM as a ``uint8`` array."""
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise BadMagic(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return pixels.reshape(h, w).copy()


# --- scans -------------------------------------------------------------------

SCAN_MAGIC = b"CVSC1\0"


def write_scan(path, scan: LidarScan) -> None:
    pts = np.ascontiguousarray(scan.points, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(SCAN_MAGIC)
        fh.write(struct.pack("<dI", scan.timestamp, pts.shape[0]))
        fh.write(pts.tobytes())


def read_scan(path) -> LidarScan:
    data = Path(path).read_bytes()
    if data[:6] != SCAN_MAGIC:
        raise BadMagic(f"{path}: bad scan magic")
    timestamp, count = struct.unpack_from("<dI", data, 6)
    expected = 18 + 12 * count
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    pts = np.frombuffer(data, dtype="<f4", count=3 * count, offset=18).reshape(count, 3)
    return LidarScan(timestamp, pts.astype(np.float64))


def read_scan_dir(directory) -> list[LidarScan]:
    files = sorted(Path(directory).glob("*.cvsc"))
    return [read_scan(f) for f in files]
