"""Reconstruction-accuracy benchmark: MBA refitting vs. temporal estimation.

Five smooth test functions are sampled at three point layouts over a
512 x 512 image. Each layout comes as three consecutive "frames" of jittered
positions. MBA fits every frame independently; the temporal solver starts
from an MBA fit of frame 0 and chains through frames 1 and 2. Errors are
RMS over frames 1 and 2 and over both directions.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from tssw.bspline import surface_value
from tssw.geometry import ImageDims
from tssw.mba import mba
from tssw.solver import SolverConfig, estimate_points

FUNCTIONS = ("g1", "g2", "g3", "g4", "g5")
SAMPLINGS = ("R100", "C160", "F66")
METHODS = ("MBA", "TSSW")
POINT_COUNTS = {"R100": 100, "C160": 160, "F66": 66}


def test_function(r: int, x, y):
    """Test surfaces on the unit square, ``r`` in 1..5."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if r == 1:
        return (0.75 * np.exp(-(9 * x + 1) ** 2 / 49 - (9 * y + 1) / 10)
                - 0.2 * np.exp(-(9 * x - 4) ** 2 - (9 * y - 7) ** 2))
    if r == 2:
        return (np.tanh(9 - 9 * x - 9 * y) + 1) / 9
    if r == 3:
        return (1.25 + np.cos(5.4 * y)) / (6 + 6 * (3 * x - 1) ** 2)
    if r == 4:
        return np.exp(-20.25 * (x - 0.5) ** 2 - 20.25 * (y - 0.5) ** 2) / 3
    if r == 5:
        return np.sqrt(64 / 81 - (x - 0.5) ** 2 - (y - 0.5) ** 2) - 0.5
    raise ValueError(f"test function index must be 1..5, got {r}")


def function_index(name) -> int:
    if isinstance(name, int):
        r = name
    else:
        name = str(name).lower()
        r = int(name[1:]) if name.startswith("g") and name[1:].isdigit() else 0
    if not 1 <= r <= 5:
        raise ValueError(f"unknown test function {name!r}; expected g1..g5")
    return r


def load_face_layout() -> np.ndarray:
    """Canonical 66-landmark face in unit (row, col) coordinates."""
    text = resources.files("tssw").joinpath("data/f66.json").read_text()
    return np.array(json.loads(text)["points"], dtype=np.float64)


@dataclass
class SamplingSet:
    kind: str
    frames: tuple  # three (K, 2) arrays: previous, current, next
    seed: int

    @property
    def K(self) -> int:
        return len(self.frames[0])


def generate_sampling(kind: str, seed: int = 0, size: int = 512, jitter: float = 2.0,
                      cluster_radius: float = 0.05) -> SamplingSet:
    if kind not in SAMPLINGS:
        raise ValueError(f"unknown sampling {kind!r}; expected one of {SAMPLINGS}")
    rng = np.random.default_rng(seed)
    lo, hi = 1.0, float(size)
    if kind == "R100":
        base = rng.uniform(lo, hi, size=(100, 2))
    elif kind == "C160":
        radius = cluster_radius * size
        margin = radius + jitter
        centers = rng.uniform(lo + margin, hi - margin, size=(8, 2))
        ang = rng.uniform(0, 2 * np.pi, size=(8, 20))
        rad = radius * np.sqrt(rng.uniform(0, 1, size=(8, 20)))
        offsets = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)
        base = (centers[:, None, :] + offsets).reshape(-1, 2)
    else:
        base = lo + load_face_layout() * (hi - lo)
    frames = [base]
    for _ in range(2):
        frames.append(np.clip(base + rng.uniform(-jitter, jitter, size=base.shape), lo, hi))
    frames[0] = np.clip(base, lo, hi)
    return SamplingSet(kind, tuple(frames), seed)


def normalized_targets(r: int, points, dims: ImageDims) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    xs = (pts[:, 0] - 1) / (dims.M - 1)
    ys = (pts[:, 1] - 1) / (dims.N - 1)
    return test_function(r, xs, ys)


def rms_error(r: int, lattices, sampling: SamplingSet, dims: ImageDims) -> float:
    """RMS misfit of lattice surfaces against ``g_r`` over frames 1 and 2.

    ``lattices`` holds one ``(psi_x, psi_y)`` pair per measured frame.
    """
    measured = sampling.frames[1:]
    if len(lattices) != len(measured):
        raise ValueError(f"expected {len(measured)} lattice pairs, got {len(lattices)}")
    total = 0.0
    for pts, pair in zip(measured, lattices):
        g = normalized_targets(r, pts, dims)
        for lat in pair:
            total += float(np.sum((g - surface_value(lat, pts)) ** 2))
    return math.sqrt(total / (sampling.K * len(measured)))


@dataclass
class BenchConfig:
    functions: tuple = FUNCTIONS
    samplings: tuple = SAMPLINGS
    seeds: int = 10
    base_seed: int = 0
    size: int = 512
    level: int = 6
    jitter: float = 2.0
    cluster_radius: float = 0.05
    alpha: float = 0.8
    beta: float = 1.0
    cg_tol: float = 1e-8
    cg_max_iter: int = 30

    def solver(self) -> SolverConfig:
        return SolverConfig(self.alpha, self.beta, self.cg_tol, self.cg_max_iter)


@dataclass
class BenchmarkReport:
    config: dict
    # (function, sampling, method) -> per-seed RMS values
    cells: dict = field(default_factory=dict)

    def mean(self, function, sampling, method) -> float:
        return float(np.mean(self.cells[(function, sampling, method)]))

    def std(self, function, sampling, method) -> float:
        return float(np.std(self.cells[(function, sampling, method)]))

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "cells": [
                {"function": f, "sampling": s, "method": m, "rms": list(v),
                 "mean": float(np.mean(v)), "std": float(np.std(v))}
                for (f, s, m), v in self.cells.items()
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchmarkReport":
        cells = {(c["function"], c["sampling"], c["method"]): [float(x) for x in c["rms"]]
                 for c in doc["cells"]}
        return cls(dict(doc["config"]), cells)

    def table(self, sep: str = "\t") -> str:
        """Delimited table, one row per function and one column per method/sampling."""
        samplings = [s for s in SAMPLINGS if any(k[1] == s for k in self.cells)]
        functions = [f for f in FUNCTIONS if any(k[0] == f for k in self.cells)]
        header = ["function"] + [f"{m}_{s}" for m in METHODS for s in samplings]
        lines = [sep.join(header)]
        for f in functions:
            row = [f]
            for m in METHODS:
                for s in samplings:
                    row.append(f"{self.mean(f, s, m):.6g}" if (f, s, m) in self.cells else "")
            lines.append(sep.join(row))
        return "\n".join(lines) + "\n"


def run_cell(r: int, sampling: SamplingSet, dims: ImageDims, level: int,
             cfg: SolverConfig) -> dict:
    """RMS of both methods for one function on one sampling set."""
    p0, p1, p2 = sampling.frames

    def targets(pts):
        g = normalized_targets(r, pts, dims)
        return np.column_stack([g, g])

    refit = [mba(p, targets(p), dims, level) for p in (p1, p2)]
    chain = []
    prev = mba(p0, targets(p0), dims, level)
    for p in (p1, p2):
        prev = estimate_points(prev[0], prev[1], p, targets(p), cfg)
        chain.append(prev)
    return {"MBA": rms_error(r, refit, sampling, dims),
            "TSSW": rms_error(r, chain, sampling, dims)}


def run_benchmark(config: BenchConfig | None = None) -> BenchmarkReport:
    config = config or BenchConfig()
    dims = ImageDims(config.size, config.size)
    cfg = config.solver()
    fnames = [f"g{function_index(f)}" for f in config.functions]
    for s in config.samplings:
        if s not in SAMPLINGS:
            raise ValueError(f"unknown sampling {s!r}; expected one of {SAMPLINGS}")
    report = BenchmarkReport(asdict(config))
    report.config["functions"] = list(fnames)
    report.config["samplings"] = list(config.samplings)
    for f in fnames:
        for s in config.samplings:
            for m in METHODS:
                report.cells[(f, s, m)] = []
    for i in range(config.seeds):
        seed = config.base_seed + i
        for s in config.samplings:
            sampling = generate_sampling(s, seed, config.size, config.jitter,
                                         config.cluster_radius)
            for f in fnames:
                res = run_cell(function_index(f), sampling, dims, config.level, cfg)
                for m in METHODS:
                    report.cells[(f, s, m)].append(res[m])
    return report
