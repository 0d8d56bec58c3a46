"""Warp-field evaluation, bicubic resampling and the sequence driver."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from tssw.bspline import ControlLattice, evaluate_grid
from tssw.geometry import FramePointPair, ImageDims, check_in_bounds
from tssw.mba import mba
from tssw.solver import SolverConfig, estimate_frame

CATMULL_ROM_A = -0.5


@dataclass
class WarpField:
    """Per-pixel displacement along rows (``fx``) and columns (``fy``)."""

    fx: np.ndarray
    fy: np.ndarray

    def __post_init__(self):
        if self.fx.shape != self.fy.shape or self.fx.ndim != 2:
            raise ValueError(f"field components differ: {self.fx.shape} vs {self.fy.shape}")

    @property
    def shape(self):
        return self.fx.shape


def evaluate_warp_field(psi_x: ControlLattice, psi_y: ControlLattice, dims: ImageDims) -> WarpField:
    for lat in (psi_x, psi_y):
        expected = round(lat.ld.scale * min(dims.M, dims.N))
        if 2 ** lat.ld.level != expected:
            raise ValueError(f"lattice level {lat.ld.level} does not belong to a "
                             f"{dims.M}x{dims.N} image")
    return WarpField(evaluate_grid(psi_x, dims.M, dims.N),
                     evaluate_grid(psi_y, dims.M, dims.N))


def cubic_kernel(t, a: float = CATMULL_ROM_A):
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    near = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    far = a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


def _taps(pos: np.ndarray, size: int):
    base = np.floor(pos)
    frac = pos - base
    base = base.astype(np.int64)
    idx = [np.clip(base + o, 0, size - 1) for o in (-1, 0, 1, 2)]
    w = [cubic_kernel(frac + 1.0), cubic_kernel(frac),
         cubic_kernel(1.0 - frac), cubic_kernel(2.0 - frac)]
    return idx, w


def remap_bicubic(frame: np.ndarray, fld: WarpField) -> np.ndarray:
    """Backward-map ``frame``: output(x, y) = frame(x + fx, y + fy).

    Uses the Catmull-Rom kernel with clamp-to-edge borders. Integer frames
    are rounded and clipped back to their dtype's range.
    """
    img = np.asarray(frame)
    M, N = img.shape[:2]
    if fld.shape != (M, N):
        raise ValueError(f"field shape {fld.shape} does not match frame {(M, N)}")
    rows = np.arange(M, dtype=np.float64)[:, None] + fld.fx
    cols = np.arange(N, dtype=np.float64)[None, :] + fld.fy
    ri, rw = _taps(rows, M)
    ci, cw = _taps(cols, N)
    src = img.astype(np.float64)
    out = np.zeros(src.shape)
    for a in range(4):
        for b in range(4):
            w = rw[a] * cw[b]
            if src.ndim == 3:
                w = w[:, :, None]
            out += w * src[ri[a], ci[b]]
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        return np.clip(np.rint(out), info.min, info.max).astype(img.dtype)
    return out.astype(img.dtype)


@dataclass
class FrameResult:
    t: int
    lattices: tuple[ControlLattice, ControlLattice]
    field: WarpField
    frame: np.ndarray | None = None
    seconds: float = 0.0
    timings: dict = field(default_factory=dict)


def quantize(lattice: ControlLattice) -> ControlLattice:
    """Round a lattice to float32 precision so dumped state resumes exactly."""
    lattice.values = lattice.values.astype(np.float32).astype(np.float64)
    return lattice


def validate_sequence(pairs: Sequence[FramePointPair], dims: ImageDims, frames=None):
    if len(pairs) == 0:
        raise ValueError("sequence has no frames")
    if frames is not None and len(frames) != len(pairs):
        raise ValueError(f"{len(frames)} frames but {len(pairs)} point pairs")
    K = pairs[0].K
    for t, pair in enumerate(pairs, start=1):
        if pair.K != K:
            raise ValueError(f"frame {t} has {pair.K} points, expected {K}")
        try:
            check_in_bounds(pair.Q, dims)
            check_in_bounds(pair.P, dims)
        except ValueError as exc:
            raise ValueError(f"frame {t}: {exc}") from None
        if frames is None or callable(frames[t - 1]):
            continue
        shape = np.asarray(frames[t - 1]).shape[:2]
        if shape != (dims.M, dims.N):
            raise ValueError(f"frame {t} has shape {shape}, expected {(dims.M, dims.N)}")


def iter_warp_sequence(frames, pairs: Sequence[FramePointPair], cfg: SolverConfig,
                       H: int = 6, dims: ImageDims | None = None,
                       start: int = 1, resume=None) -> Iterator[FrameResult]:
    """Warp frames one at a time.

    ``frames`` may be ``None`` to compute lattices and fields only, or any
    sequence whose items are loaded lazily (e.g. callables returning arrays).
    ``resume`` holds the lattices of frame ``start - 1`` when restarting a
    run part-way; frames before ``start`` are skipped.
    """
    if dims is None:
        if frames is None:
            raise ValueError("image dims are required when no frames are given")
        first = frames[0]() if callable(frames[0]) else frames[0]
        dims = ImageDims(*np.asarray(first).shape[:2])
    validate_sequence(pairs, dims, frames)
    if start < 1 or start > len(pairs):
        raise ValueError(f"start frame {start} outside 1..{len(pairs)}")
    if start > 1 and resume is None:
        raise ValueError("resuming needs the lattices of the previous frame")
    prev = resume
    for t in range(start, len(pairs) + 1):
        pair = pairs[t - 1]
        t0 = time.perf_counter()
        if prev is None:
            lx, ly = mba(pair.P, pair.Z, dims, H)
            lx.frame = ly.frame = t
        else:
            lx, ly = estimate_frame(prev[0], prev[1], pair, cfg, frame=t)
        lattices = (quantize(lx), quantize(ly))
        t1 = time.perf_counter()
        fld = evaluate_warp_field(*lattices, dims)
        out = None
        if frames is not None:
            src = frames[t - 1]() if callable(frames[t - 1]) else frames[t - 1]
            out = remap_bicubic(src, fld)
        t2 = time.perf_counter()
        prev = lattices
        yield FrameResult(t, lattices, fld, out, t2 - t0,
                          {"lattices": t1 - t0, "resample": t2 - t1})


def warp_sequence(frames, pairs, cfg: SolverConfig | None = None, H: int = 6,
                  dims: ImageDims | None = None) -> list[FrameResult]:
    """Warp a whole sequence: MBA on frame 1, energy minimisation afterwards."""
    return list(iter_warp_sequence(frames, pairs, cfg or SolverConfig(), H, dims))
