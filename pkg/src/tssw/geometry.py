"""Coordinate conventions shared by every module.

Points are (x, y) pairs with x along image rows (height M) and y along
columns (width N). Coordinates are 1-based: a pixel centre sits at integer
positions 1..M / 1..N, exactly as they appear in track files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ImageDims:
    M: int
    N: int

    def __post_init__(self):
        if self.M < 4 or self.N < 4:
            raise ValueError(f"image must be at least 4x4, got {self.M}x{self.N}")


@dataclass(frozen=True)
class LatticeDims:
    """Size of the level-``h`` control lattice over an image.

    ``scale`` is the number of lattice cells per pixel (one cell spans
    ``min(M, N) / 2**h`` pixels).
    """

    m: int
    n: int
    level: int
    scale: float

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    @property
    def size(self) -> int:
        return self.m * self.n


def lattice_dims(dims: ImageDims, h: int) -> LatticeDims:
    if h < 0:
        raise ValueError(f"lattice level must be non-negative, got {h}")
    short = min(dims.M, dims.N)
    if 2 ** h > short:
        raise ValueError(
            f"level {h} is too fine for a {dims.M}x{dims.N} image "
            f"(2**{h} > {short})")
    cell = short / 2 ** h
    m = math.ceil(dims.M / cell) + 3
    n = math.ceil(dims.N / cell) + 3
    return LatticeDims(m=m, n=n, level=h, scale=2 ** h / short)


def scale_point(p, ld: LatticeDims):
    """Map image coordinates to lattice coordinates, keeping (1, 1) fixed.

    Accepts a single pair or a (K, 2) array.
    """
    p = np.asarray(p, dtype=np.float64)
    return ld.scale * (p - 1.0) + 1.0


def as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return pts.reshape(0, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected a (K, 2) array of points, got shape {pts.shape}")
    return pts


def check_in_bounds(points: np.ndarray, dims: ImageDims) -> None:
    pts = as_points(points)
    if not np.all(np.isfinite(pts)):
        raise ValueError("feature points must be finite")
    bad = ((pts[:, 0] < 1) | (pts[:, 0] > dims.M)
           | (pts[:, 1] < 1) | (pts[:, 1] > dims.N))
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"point {k} at {tuple(pts[k])} lies outside the "
            f"{dims.M}x{dims.N} image")


def displacements(Q, P) -> np.ndarray:
    """Per-point displacement ``Q - P`` as a (K, 2) array."""
    Q = as_points(Q)
    P = as_points(P)
    if Q.shape != P.shape:
        raise ValueError(f"point sets differ in size: {len(Q)} vs {len(P)}")
    return Q - P


@dataclass
class FramePointPair:
    """Source points ``Q`` and edited points ``P`` for a single frame."""

    Q: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.Q = as_points(self.Q)
        self.P = as_points(self.P)
        if self.Q.shape != self.P.shape:
            raise ValueError(
                f"point sets differ in size: {len(self.Q)} vs {len(self.P)}")

    @property
    def K(self) -> int:
        return len(self.Q)

    @property
    def Z(self) -> np.ndarray:
        return self.Q - self.P
