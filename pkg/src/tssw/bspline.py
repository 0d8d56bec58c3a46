"""Uniform cubic B-spline basis, per-point weight stencils and surface evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from tssw.geometry import LatticeDims, as_points, scale_point

# rows are a_0..a_3, columns multiply [u^3, u^2, u, 1]
BASIS_COEFFS = np.array([
    [-1.0, 3.0, -3.0, 1.0],
    [3.0, -6.0, 0.0, 4.0],
    [-3.0, 3.0, 3.0, 1.0],
    [1.0, 0.0, 0.0, 0.0],
]) / 6.0


def basis(i: int, u: float) -> float:
    if i not in (0, 1, 2, 3):
        raise ValueError(f"basis index must be 0..3, got {i}")
    if not 0.0 <= u < 1.0:
        raise ValueError(f"basis parameter must lie in [0, 1), got {u}")
    return float(BASIS_COEFFS[i] @ np.array([u ** 3, u ** 2, u, 1.0]))


def basis_all(u) -> np.ndarray:
    """All four basis values for each entry of ``u``; shape ``u.shape + (4,)``."""
    u = np.asarray(u, dtype=np.float64)
    powers = np.stack([u ** 3, u ** 2, u, np.ones_like(u)], axis=-1)
    return powers @ BASIS_COEFFS.T


@dataclass
class ControlLattice:
    """Control values for one displacement direction at one lattice level.

    ``direction`` is 1 for the x (row) component and 2 for y (column).
    """

    values: np.ndarray
    ld: LatticeDims
    direction: int = 1
    frame: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.ld.shape:
            raise ValueError(
                f"lattice values have shape {self.values.shape}, "
                f"expected {self.ld.shape}")

    @classmethod
    def zeros(cls, ld: LatticeDims, direction: int = 1, frame: int = 1):
        return cls(np.zeros(ld.shape), ld, direction, frame)


@dataclass
class WeightStencil:
    """The 16 nonzero entries of a point's weight matrix.

    ``anchor`` is the 1-based lattice index (i_k, j_k) of the stencil's
    first row/column; ``w[i, j]`` multiplies lattice entry
    ``(i_k + i, j_k + j)``.
    """

    anchor: tuple[int, int]
    w: np.ndarray = field(repr=False)

    def dense(self, ld: LatticeDims) -> np.ndarray:
        out = np.zeros(ld.shape)
        i0, j0 = self.anchor[0] - 1, self.anchor[1] - 1
        out[i0:i0 + 4, j0:j0 + 4] = self.w
        return out


def stencils(points, ld: LatticeDims):
    """Vectorised stencils for a (K, 2) array of image points.

    Returns 0-based anchor rows, anchor columns and a (K, 4, 4) weight array.
    """
    pts = as_points(points)
    scaled = scale_point(pts, ld)
    anchor = np.floor(scaled)
    frac = scaled - anchor
    rows = anchor[:, 0].astype(np.int64) - 1
    cols = anchor[:, 1].astype(np.int64) - 1
    if len(pts) and (rows.min() < 0 or cols.min() < 0
                     or rows.max() + 4 > ld.m or cols.max() + 4 > ld.n):
        raise ValueError(
            f"stencil exceeds the {ld.m}x{ld.n} lattice; "
            "points must lie inside the image")
    bu = basis_all(frac[:, 0])
    bv = basis_all(frac[:, 1])
    return rows, cols, bu[:, :, None] * bv[:, None, :]


def weight_stencil(p_scaled, ld: LatticeDims) -> WeightStencil:
    """Stencil for one point already mapped to lattice coordinates."""
    xh, yh = (float(c) for c in p_scaled)
    i_k, j_k = int(np.floor(xh)), int(np.floor(yh))
    if i_k < 1 or j_k < 1 or i_k + 3 > ld.m or j_k + 3 > ld.n:
        raise ValueError(
            f"stencil at ({i_k}, {j_k}) exceeds the {ld.m}x{ld.n} lattice")
    w = np.outer(basis_all(xh - i_k), basis_all(yh - j_k))
    return WeightStencil((i_k, j_k), w)


def weight_matrix(points, ld: LatticeDims) -> sp.csr_matrix:
    """Sparse (K, m*n) matrix whose k-th row is the flattened W_k.

    Lattices are flattened in row-major order.
    """
    rows, cols, w = stencils(points, ld)
    K = len(rows)
    di, dj = np.meshgrid(np.arange(4), np.arange(4), indexing="ij")
    flat = (rows[:, None, None] + di) * ld.n + (cols[:, None, None] + dj)
    r = np.repeat(np.arange(K), 16)
    return sp.csr_matrix((w.reshape(-1), (r, flat.reshape(-1))),
                         shape=(K, ld.size))


def _values_and_dims(lattice, ld):
    if isinstance(lattice, ControlLattice):
        return lattice.values, lattice.ld
    if ld is None:
        raise ValueError("lattice dims are required for a bare value array")
    values = np.asarray(lattice, dtype=np.float64)
    if values.shape != ld.shape:
        raise ValueError(f"lattice shape {values.shape} does not match {ld.shape}")
    return values, ld


def surface_value(lattice, p, ld: LatticeDims | None = None):
    """Warping-surface value at one image point or at each row of a (K, 2) array."""
    values, ld = _values_and_dims(lattice, ld)
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    rows, cols, w = stencils(p.reshape(-1, 2), ld)
    di = rows[:, None] + np.arange(4)
    dj = cols[:, None] + np.arange(4)
    patches = values[di[:, :, None], dj[:, None, :]]
    out = np.einsum("kij,kij->k", w, patches)
    return float(out[0]) if single else out


def axis_basis_matrix(length: int, size: int, scale: float) -> np.ndarray:
    """Dense (length, size) matrix evaluating 1-D splines at pixels 1..length."""
    coords = scale * np.arange(length, dtype=np.float64) + 1.0
    anchor = np.floor(coords)
    b = basis_all(coords - anchor)
    start = anchor.astype(np.int64) - 1
    out = np.zeros((length, size))
    idx = np.arange(length)
    for i in range(4):
        out[idx, start + i] = b[:, i]
    return out


def evaluate_grid(lattice, M: int, N: int, ld: LatticeDims | None = None) -> np.ndarray:
    """Surface values at every integer pixel of an M x N image."""
    values, ld = _values_and_dims(lattice, ld)
    bx = axis_basis_matrix(M, ld.m, ld.scale)
    by = axis_basis_matrix(N, ld.n, ld.scale)
    return bx @ values @ by.T
