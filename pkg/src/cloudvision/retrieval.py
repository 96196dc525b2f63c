"""Global image descriptors and brute-force nearest-neighbour retrieval."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, CorruptIndex, EmptyDatabase, ImageTooSmall
from .formats import TimedPose
from .geometry import Pose

DB_MAGIC = b"CVDB1\0"
DB_VERSION = 1
KIND_TAGS = {"tiny": 0, "hog": 1}
_EPS = 1e-8


def resize_bilinear(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize with pixel-center alignment (half-pixel offsets)."""
    img = np.asarray(image, dtype=np.float64)
    H, W = img.shape
    y = np.clip((np.arange(height) + 0.5) * (H / height) - 0.5, 0.0, H - 1)
    x = np.clip((np.arange(width) + 0.5) * (W / width) - 0.5, 0.0, W - 1)
    y0 = np.minimum(np.floor(y).astype(np.intp), H - 2) if H > 1 else np.zeros(height, np.intp)
    x0 = np.minimum(np.floor(x).astype(np.intp), W - 2) if W > 1 else np.zeros(width, np.intp)
    wy = (y - y0)[:, None]
    wx = (x - x0)[None, :]
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    top = img[np.ix_(y0, x0)] * (1 - wx) + img[np.ix_(y0, x1)] * wx
    bottom = img[np.ix_(y1, x0)] * (1 - wx) + img[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy


def _l2_normalize(v: np.ndarray) -> np.ndarray:
    return v / max(float(np.linalg.norm(v)), _EPS)


def _tiny(image: np.ndarray) -> np.ndarray:
    small = resize_bilinear(image, 32, 32)
    small = small - small.mean()
    small = small / max(float(small.std()), _EPS)
    return _l2_normalize(small.ravel())


def _hog(image: np.ndarray, cells: int = 16, bins: int = 8) -> np.ndarray:
    # Unsigned orientation histograms on a cells x cells grid, magnitude-weighted.
    small = resize_bilinear(image, 4 * cells, 4 * cells)
    gy, gx = np.gradient(small)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), np.pi)
    b = np.minimum((ang / np.pi * bins).astype(np.intp), bins - 1)
    cy = np.arange(4 * cells) // 4
    cell = cy[:, None] * cells + cy[None, :]
    hist = np.bincount((cell * bins + b).ravel(), weights=mag.ravel(), minlength=cells * cells * bins)
    hist = hist - hist.mean()
    return _l2_normalize(hist)


_DESCRIPTORS = {"tiny": _tiny, "hog": _hog}


def compute_descriptor(image: np.ndarray, kind: str = "tiny") -> np.ndarray:
    """L2-normalised global descriptor of a grayscale image.

    ``"tiny"``: 32x32 bilinear thumbnail, standardised and flattened
    (D = 1024).  ``"hog"``: 16x16 grid of 8-bin gradient-orientation
    histograms (D = 2048).  A constant image yields the zero vector.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 32 or img.shape[1] < 32:
        raise ImageTooSmall(f"descriptor needs at least 32x32 pixels, got {img.shape}")
    try:
        fn = _DESCRIPTORS[kind]
    except KeyError:
        raise ValueError(f"unknown descriptor kind {kind!r}") from None
    return fn(img)


@dataclass(frozen=True, eq=False)
class RetrievalDatabase:
    descriptors: np.ndarray  # (M, D), row m belongs to image id m
    poses: tuple[TimedPose, ...]
    kind: str = "tiny"

    def __post_init__(self) -> None:
        d = np.asarray(self.descriptors, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != len(self.poses):
            raise ValueError("descriptor rows must match the number of poses")
        object.__setattr__(self, "descriptors", d)
        object.__setattr__(self, "poses", tuple(self.poses))

    def __len__(self) -> int:
        return self.descriptors.shape[0]

    @classmethod
    def build(cls, images, poses, kind: str = "tiny") -> RetrievalDatabase:
        desc = np.stack([compute_descriptor(img, kind) for img in images]) if len(images) else np.zeros((0, 0))
        # Stored as float32 on disk; round here so in-memory and loaded databases agree.
        return cls(desc.astype(np.float32).astype(np.float64), tuple(poses), kind)


def query_top_k(db: RetrievalDatabase, q: np.ndarray, k: int = 1) -> list[tuple[int, float]]:
    """Database ids ranked by cosine similarity; ties go to the smaller id."""
    if len(db) == 0:
        raise EmptyDatabase("retrieval database is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    sims = db.descriptors @ np.asarray(q, dtype=np.float64)
    sims = np.clip(sims, -1.0, 1.0)
    order = np.lexsort((np.arange(len(db)), -sims))[:k]
    return [(int(i), float(sims[i])) for i in order]


# --- database file -----------------------------------------------------------

_HEADER = struct.Struct("<6sIIIB")


def save_database(db: RetrievalDatabase, path) -> None:
    M, D = db.descriptors.shape if len(db) else (0, 0)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DB_MAGIC, DB_VERSION, M, D, KIND_TAGS[db.kind]))
        for m in range(M):
            fh.write(struct.pack("<I", m))
            fh.write(np.ascontiguousarray(db.descriptors[m], dtype="<f4").tobytes())
            tp = db.poses[m]
            fh.write(struct.pack("<d7d", tp.timestamp, *tp.pose.to_tum()))


def load_database(path) -> RetrievalDatabase:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:6] != DB_MAGIC:
        raise BadMagic(f"{path}: not a retrieval database")
    _, version, M, D, tag = _HEADER.unpack_from(data, 0)
    if version != DB_VERSION:
        raise BadMagic(f"{path}: unsupported database version {version}")
    kinds = {v: k for k, v in KIND_TAGS.items()}
    if tag not in kinds:
        raise BadMagic(f"{path}: unknown descriptor kind tag {tag}")
    rec = 4 + 4 * D + 8 * 8
    if len(data) != _HEADER.size + M * rec:
        raise CorruptIndex(f"{path}: size does not match {M} records of dimension {D}")
    desc = np.zeros((M, D))
    poses: list[TimedPose | None] = [None] * M
    pos = _HEADER.size
    for _ in range(M):
        (image_id,) = struct.unpack_from("<I", data, pos)
        if image_id >= M or poses[image_id] is not None:
            raise CorruptIndex(f"{path}: image ids must be unique and dense")
        desc[image_id] = np.frombuffer(data, dtype="<f4", count=D, offset=pos + 4)
        vals = struct.unpack_from("<d7d", data, pos + 4 + 4 * D)
        poses[image_id] = TimedPose(vals[0], Pose.from_tum(vals[1:]))
        pos += rec
    return RetrievalDatabase(desc, tuple(poses), kinds[tag])
