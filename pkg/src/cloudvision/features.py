"""Multi-scale dense feature pyramids.

Each level holds three standardized planes: blurred intensity and its x/y
central-difference gradients.  Levels are ordered coarse to fine, and level
``l`` of an ``L``-level pyramid is decimated by ``2 ** (L - 1 - l)``, so a
pixel ``i`` of that level sits at pixel ``i * scale`` of the input image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ImageTooSmall, OutOfBounds

DEFAULT_LEVELS = 3
DEFAULT_SIGMA = 1.0
_STD_EPS = 1e-8


@dataclass(frozen=True, eq=False)
class FeatureLevel:
    scale: int
    planes: np.ndarray  # (C, H, W), float64

    @property
    def channels(self) -> int:
        return self.planes.shape[0]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    def sample(self, uv) -> tuple[np.ndarray, np.ndarray]:
        """Bilinear value ``(C,)`` and its analytic gradient ``(C, 2)`` at one location.

        Raises :class:`OutOfBounds` outside the 1-pixel safety margin.
        """
        f, G, inside = sample_many(self, np.asarray(uv, dtype=np.float64).reshape(1, 2))
        if not inside[0]:
            raise OutOfBounds(f"uv={tuple(np.ravel(uv))} outside level of size {self.width}x{self.height}")
        return f[0], G[0]


@dataclass(frozen=True, eq=False)
class FeaturePyramid:
    levels: tuple[FeatureLevel, ...]  # coarse -> fine

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, i: int) -> FeatureLevel:
        return self.levels[i]


def in_bounds(level: FeatureLevel, uv: np.ndarray) -> np.ndarray:
    u, v = uv[..., 0], uv[..., 1]
    return (u >= 1.0) & (u <= level.width - 2) & (v >= 1.0) & (v <= level.height - 2)


def sample_many(level: FeatureLevel, uv: np.ndarray):
    """Vectorised bilinear sampling.

    Returns ``(f, G, inside)`` with ``f`` of shape ``(N, C)``, ``G`` of shape
    ``(N, C, 2)`` holding ``d f / d (u, v)``, and a boolean mask of locations
    inside the sampling domain.  Values at outside locations are zero.
    """
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    inside = in_bounds(level, uv)
    n, C = uv.shape[0], level.channels
    f = np.zeros((n, C))
    G = np.zeros((n, C, 2))
    if not inside.any():
        return f, G, inside
    u = uv[inside, 0]
    v = uv[inside, 1]
    # Clamp the cell so that u == width - 1 still has a right neighbour.
    u0 = np.minimum(np.floor(u).astype(np.intp), level.width - 2)
    v0 = np.minimum(np.floor(v).astype(np.intp), level.height - 2)
    a = u - u0
    b = v - v0
    P = level.planes
    f00 = P[:, v0, u0]
    f10 = P[:, v0, u0 + 1]
    f01 = P[:, v0 + 1, u0]
    f11 = P[:, v0 + 1, u0 + 1]
    top = f00 + a * (f10 - f00)
    bottom = f01 + a * (f11 - f01)
    f[inside] = (top + b * (bottom - top)).T
    G[inside, :, 0] = ((1.0 - b) * (f10 - f00) + b * (f11 - f01)).T
    G[inside, :, 1] = (bottom - top).T
    return f, G, inside


def _standardize(plane: np.ndarray) -> np.ndarray:
    mean = plane.mean()
    std = plane.std()
    # Blurring a constant image leaves round-off ripples; do not amplify them.
    if std <= _STD_EPS * (1.0 + abs(mean)):
        return np.zeros_like(plane)
    return (plane - mean) / std


def _central_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # np.gradient: central differences inside, one-sided at the border.
    # A single row or column (tiny coarse levels) has no gradient along it.
    gy = np.gradient(img, axis=0) if img.shape[0] > 1 else np.zeros_like(img)
    gx = np.gradient(img, axis=1) if img.shape[1] > 1 else np.zeros_like(img)
    return gx, gy


def raw_levels(image: np.ndarray, levels: int = DEFAULT_LEVELS, sigma: float = DEFAULT_SIGMA):
    """Blurred intensity planes before gradient extraction, fine -> coarse."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("expected a 2D grayscale image")
    if levels < 1:
        raise ValueError("level count must be >= 1")
    need = 2 ** (levels - 1)
    if img.shape[0] < need or img.shape[1] < need:
        raise ImageTooSmall(f"image {img.shape} too small for {levels} levels")
    out = []
    current = img
    for l in range(levels):
        blurred = ndimage.gaussian_filter(current, sigma, mode="reflect", truncate=3.0) if sigma > 0 else current
        if l > 0:
            blurred = blurred[::2, ::2]
        out.append(blurred)
        current = blurred
    return out


def build_pyramid(image: np.ndarray, levels: int = DEFAULT_LEVELS, sigma: float = DEFAULT_SIGMA) -> FeaturePyramid:
    fine_to_coarse = raw_levels(image, levels, sigma)
    built = []
    for l, intensity in enumerate(fine_to_coarse):
        gx, gy = _central_gradients(intensity)
        planes = np.stack([_standardize(intensity), _standardize(gx), _standardize(gy)])
        built.append(FeatureLevel(scale=2**l, planes=planes))
    return FeaturePyramid(tuple(reversed(built)))
