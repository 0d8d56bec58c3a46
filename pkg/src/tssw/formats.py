"""Readers and writers for tracks, frames, lattice/field dumps, training
sets and benchmark reports. Every writer replaces its target atomically."""

from __future__ import annotations

import json
import os
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from PIL import Image

from tssw.bench import BenchmarkReport
from tssw.editors import EDGE_COUNT, TrainingSubset
from tssw.geometry import FramePointPair, ImageDims

TRACKS_VERSION = 1
GRID_MAGIC = b"TSSW"
GRID_VERSION = 1
GRID_HEADER = struct.Struct("<4sHIIH")
FRAME_SUFFIXES = (".png",)


class FormatError(ValueError):
    """Malformed or inconsistent input file."""


@contextmanager
def atomic_write(path, mode="w"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path, doc):
    with atomic_write(path) as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None


# -- tracks -------------------------------------------------------------------

def write_tracks(path, dims: ImageDims, pairs) -> None:
    K = pairs[0].K if pairs else 0
    doc = {
        "version": TRACKS_VERSION,
        "M": dims.M,
        "N": dims.N,
        "K": K,
        "frames": [{"t": t, "Q": p.Q.tolist(), "P": p.P.tolist()}
                   for t, p in enumerate(pairs, start=1)],
    }
    _write_json(path, doc)


def read_tracks(path):
    """Return ``(dims, pairs)`` from a tracks file."""
    doc = _read_json(path)
    try:
        dims = ImageDims(int(doc["M"]), int(doc["N"]))
        K = int(doc["K"])
        frames = sorted(doc["frames"], key=lambda f: f["t"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: missing or invalid header field ({exc})") from None
    pairs = []
    for i, fr in enumerate(frames, start=1):
        if fr.get("t") != i:
            raise FormatError(f"{path}: frame numbers must run 1..T, found t={fr.get('t')}")
        try:
            pair = FramePointPair(fr["Q"], fr["P"])
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}: frame {i}: {exc}") from None
        if pair.K != K:
            raise FormatError(f"{path}: frame {i} has {pair.K} points, header says K={K}")
        pairs.append(pair)
    return dims, pairs


# -- lattice and field dumps ----------------------------------------------------

def write_grid(path, values) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"grid dumps are 2-D, got shape {values.shape}")
    rows, cols = values.shape
    with atomic_write(path, "wb") as fh:
        fh.write(GRID_HEADER.pack(GRID_MAGIC, GRID_VERSION, rows, cols, 0))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_grid(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < GRID_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, rows, cols, _ = GRID_HEADER.unpack_from(data)
    if magic != GRID_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != GRID_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    body = data[GRID_HEADER.size:]
    if len(body) != 4 * rows * cols:
        raise FormatError(f"{path}: expected {rows}x{cols} floats, got {len(body)} bytes")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)


# -- frames ------------------------------------------------------------------------

def list_frames(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"{directory}: frames directory does not exist")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
    if not files:
        raise FormatError(f"{directory}: no PNG frames found")
    return files


def read_frame(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            return np.asarray(im)
    except OSError as exc:
        raise FormatError(f"{path}: unreadable image ({exc})") from None


def write_frame(path, pixels) -> None:
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8:
        pixels = np.clip(np.rint(pixels), 0, 255).astype(np.uint8)
    image = Image.fromarray(pixels, mode="L" if pixels.ndim == 2 else "RGB")
    with atomic_write(path, "wb") as fh:
        image.save(fh, format="PNG")


def frame_name(t: int, width: int = 5) -> str:
    return f"{t:0{width}d}.png"


# -- training subsets ----------------------------------------------------------------

def write_training(path, subset: TrainingSubset) -> None:
    doc = {
        "edges": subset.edges.tolist(),
        "entries": [{"v": v.tolist(), "b": float(b)}
                    for v, b in zip(subset.vectors, subset.scores)],
    }
    _write_json(path, doc)


def read_training(path, gender: int = 1, edge_count: int | None = EDGE_COUNT) -> TrainingSubset:
    doc = _read_json(path)
    try:
        edges = doc["edges"]
        entries = doc["entries"]
        vectors = [e["v"] for e in entries]
        scores = [e["b"] for e in entries]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: missing field {exc}") from None
    if edge_count is not None and len(edges) != edge_count:
        raise FormatError(f"{path}: edge list has {len(edges)} edges, expected {edge_count}")
    try:
        return TrainingSubset(vectors, scores, edges, gender)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


# -- benchmark reports --------------------------------------------------------------

def write_report(path, report: BenchmarkReport) -> Path:
    """Write the JSON report to ``path`` and the table next to it (``.tsv``)."""
    path = Path(path)
    _write_json(path, report.to_dict())
    table = path.with_suffix(".tsv")
    with atomic_write(table) as fh:
        fh.write(report.table())
    return table


def read_report(path) -> BenchmarkReport:
    try:
        return BenchmarkReport.from_dict(_read_json(path))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: missing field {exc}") from None


def read_region(path) -> tuple:
    doc = _read_json(path)
    if isinstance(doc, dict):
        doc = doc.get("indices")
    if not isinstance(doc, list) or not all(isinstance(i, int) for i in doc):
        raise FormatError(f"{path}: expected a list of landmark indices")
    return tuple(doc)
