"""Multilevel B-spline approximation (MBA) of scattered displacements.

Used to initialise the first frame of a sequence and as the per-frame
baseline in the reconstruction benchmark.
"""

from __future__ import annotations

import numpy as np

from tssw.bspline import ControlLattice, stencils, surface_value
from tssw.geometry import ImageDims, LatticeDims, as_points, lattice_dims

__all__ = ["ControlLattice", "ba_single_level", "refine_lattice", "mba", "mba_levels"]


def ba_single_level(points, z, ld: LatticeDims, direction: int = 1) -> ControlLattice:
    """Single-level B-spline approximation of scalar values ``z`` at ``points``.

    Each point proposes the least-norm control values reproducing its own
    value; overlapping proposals are blended with weights ``w**2``.
    """
    pts = as_points(points)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if len(z) != len(pts):
        raise ValueError(f"{len(pts)} points but {len(z)} values")
    delta = np.zeros(ld.shape)
    omega = np.zeros(ld.shape)
    if len(pts):
        rows, cols, w = stencils(pts, ld)
        w2 = w ** 2
        phi = w * (z / w2.sum(axis=(1, 2)))[:, None, None]
        ri = (rows[:, None, None] + np.arange(4)[None, :, None]).repeat(4, axis=2)
        ci = (cols[:, None, None] + np.arange(4)[None, None, :]).repeat(4, axis=1)
        np.add.at(delta, (ri, ci), w2 * phi)
        np.add.at(omega, (ri, ci), w2)
    values = np.divide(delta, omega, out=np.zeros(ld.shape), where=omega > 0)
    return ControlLattice(values, ld, direction)


def _subdivide_axis(a: np.ndarray, fine_len: int) -> np.ndarray:
    """Cubic B-spline subdivision along axis 0 with edge replication.

    Coarse index ``c`` (0-based) sits at fine index ``2c - 1``; even fine
    indices are midpoints between coarse neighbours.
    """
    coarse_len = a.shape[0]

    def at(idx):
        return a[np.clip(idx, 0, coarse_len - 1)]

    j = np.arange(fine_len)
    half = j // 2
    even = (at(half) + at(half + 1)) / 2.0
    odd = (at(half) + 6.0 * at(half + 1) + at(half + 2)) / 8.0
    mask = (j % 2 == 0).reshape((-1,) + (1,) * (a.ndim - 1))
    return np.where(mask, even, odd)


def refine_lattice(coarse: ControlLattice, fine_ld: LatticeDims) -> ControlLattice:
    """Lattice at the next level representing the same surface as ``coarse``."""
    if fine_ld.level != coarse.ld.level + 1:
        raise ValueError(
            f"refinement goes from level {coarse.ld.level} to "
            f"{coarse.ld.level + 1}, got target level {fine_ld.level}")
    rows = _subdivide_axis(coarse.values, fine_ld.m)
    values = _subdivide_axis(rows.T, fine_ld.n).T
    return ControlLattice(values, fine_ld, coarse.direction, coarse.frame)


def mba_levels(points, z, dims: ImageDims, H: int, direction: int = 1):
    """Run MBA for one direction, yielding ``(lattice, residuals)`` per level.

    ``residuals`` are the misfits at the feature points once the level's
    lattice has been accumulated.
    """
    pts = as_points(points)
    residual = np.asarray(z, dtype=np.float64).reshape(-1).copy()
    acc = None
    for h in range(H + 1):
        ld = lattice_dims(dims, h)
        step = ba_single_level(pts, residual, ld, direction)
        if len(pts):
            residual = residual - surface_value(step, pts)
        if acc is None:
            acc = step
        else:
            acc = refine_lattice(acc, ld)
            acc.values += step.values
        yield acc, residual.copy()


def mba(points, z_pairs, dims: ImageDims, H: int = 6):
    """Finest-level lattices ``(psi_x, psi_y)`` fitting (K, 2) displacements."""
    z_pairs = np.asarray(z_pairs, dtype=np.float64).reshape(-1, 2)
    lattice_dims(dims, H)
    out = []
    for l in (1, 2):
        for lattice, _ in mba_levels(points, z_pairs[:, l - 1], dims, H, l):
            pass
        out.append(lattice)
    return tuple(out)
