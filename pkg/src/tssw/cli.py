"""Command-line entry points: ``tssw warp``, ``tssw bench`` and ``tssw edit``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from tssw import formats
from tssw.bench import FUNCTIONS, SAMPLINGS, BenchConfig, function_index, run_benchmark
from tssw.bspline import ControlLattice
from tssw.editors import EditParams, attractiveness_edit, manipulate_expression
from tssw.formats import FormatError
from tssw.geometry import FramePointPair, ImageDims, lattice_dims
from tssw.solver import SolverConfig
from tssw.warp import iter_warp_sequence

log = logging.getLogger("tssw")


@dataclass
class PipelineConfig:
    alpha: float = 0.8
    beta: float = 1.0
    level: int = 6
    cg_tol: float = 1e-8
    cg_max_iter: int = 30
    literal_sign: bool = False
    border: str = "clamp"
    seed: int = 0
    paths: dict = field(default_factory=dict)

    def solver(self) -> SolverConfig:
        return SolverConfig(self.alpha, self.beta, self.cg_tol, self.cg_max_iter,
                            self.literal_sign)

    def validate(self) -> None:
        self.solver()
        if self.level < 0:
            raise ValueError(f"level must be non-negative, got {self.level}")
        if self.border != "clamp":
            raise ValueError(f"unsupported border policy {self.border!r}")


def _split(values):
    out = []
    for v in values or []:
        out.extend(s for s in v.split(",") if s)
    return out


def lattice_paths(directory, t: int):
    directory = Path(directory)
    return directory / f"{t:05d}_x.tssw", directory / f"{t:05d}_y.tssw"


def cmd_warp(args) -> int:
    cfg = PipelineConfig(alpha=args.alpha, beta=args.beta, level=args.level,
                         cg_tol=args.cg_tol, cg_max_iter=args.cg_iters,
                         literal_sign=args.literal_sign, seed=args.seed,
                         paths={"frames": str(args.frames), "tracks": str(args.tracks),
                                "out": str(args.out)})
    cfg.validate()
    files = formats.list_frames(args.frames)
    dims, pairs = formats.read_tracks(args.tracks)
    if len(files) != len(pairs):
        raise FormatError(f"{args.frames}: {len(files)} frames but {args.tracks} "
                          f"describes {len(pairs)}")
    for t, path in enumerate(files, start=1):
        # headers only; pixels are loaded lazily below
        with Image.open(path) as im:
            shape = (im.height, im.width)
        if shape != (dims.M, dims.N):
            raise FormatError(f"{path}: frame {t} is {shape[0]}x{shape[1]}, "
                              f"tracks declare {dims.M}x{dims.N}")
    lattice_dims(dims, cfg.level)

    out = Path(args.out)
    resume = None
    if args.start > 1:
        if not args.resume_from:
            raise ValueError("--start > 1 requires --resume-from")
        ld = lattice_dims(dims, cfg.level)
        px, py = lattice_paths(args.resume_from, args.start - 1)
        resume = tuple(ControlLattice(formats.read_grid(p), ld, l, args.start - 1)
                       for l, p in ((1, px), (2, py)))

    frames = [lambda p=p: formats.read_frame(p) for p in files]
    manifest = {"config": asdict(cfg), "image": {"M": dims.M, "N": dims.N},
                "K": pairs[0].K, "frames": []}
    started = time.perf_counter()
    results = iter_warp_sequence(frames, pairs, cfg.solver(), cfg.level, dims,
                                 start=args.start, resume=resume)
    for res in results:
        name = files[res.t - 1].name
        formats.write_frame(out / name, res.frame)
        if args.dump_lattices:
            for lat, p in zip(res.lattices, lattice_paths(out / "lattices", res.t)):
                formats.write_grid(p, lat.values)
        if args.dump_fields:
            fx, fy = lattice_paths(out / "fields", res.t)
            formats.write_grid(fx, res.field.fx)
            formats.write_grid(fy, res.field.fy)
        manifest["frames"].append({"t": res.t, "file": name, "seconds": res.seconds,
                                   **{f"{k}_seconds": v for k, v in res.timings.items()}})
        log.info("frame %d/%d done in %.3fs", res.t, len(pairs), res.seconds)
    manifest["total_seconds"] = time.perf_counter() - started
    formats._write_json(out / "manifest.json", manifest)
    return 0


def cmd_bench(args) -> int:
    functions = _split(args.functions) or list(FUNCTIONS)
    samplings = _split(args.samplings) or list(SAMPLINGS)
    functions = [f"g{function_index(f)}" for f in functions]
    for s in samplings:
        if s not in SAMPLINGS:
            raise ValueError(f"unknown sampling {s!r}; expected one of {', '.join(SAMPLINGS)}")
    if args.seeds < 1:
        raise ValueError("--seeds must be at least 1")
    config = BenchConfig(functions=tuple(functions), samplings=tuple(samplings),
                         seeds=args.seeds, base_seed=args.seed, size=args.size,
                         level=args.level, jitter=args.jitter, alpha=args.alpha,
                         beta=args.beta)
    report = run_benchmark(config)
    table = formats.write_report(args.out, report)
    sys.stdout.write(report.table())
    log.info("report written to %s and %s", args.out, table)
    return 0


def cmd_edit(args) -> int:
    dims, pairs = formats.read_tracks(args.tracks)
    track = [p.Q for p in pairs]
    if args.engine == "expression":
        region = formats.read_region(args.region) if args.region else EditParams().region
        params = EditParams(factor=args.factor, region=region)
        edited = [manipulate_expression(Q, params, dims) for Q in track]
    else:
        if not args.training:
            raise ValueError("--engine attract requires --training")
        subset = formats.read_training(args.training, gender=args.gender)
        if subset.edges.max() >= pairs[0].K:
            raise FormatError(f"{args.training}: edges refer to landmarks beyond K={pairs[0].K}")
        params = EditParams(sigma=args.sigma, neighbor_count=args.neighbors)
        edited = attractiveness_edit(track, subset, params)
        edited = [np.clip(P, 1, [dims.M, dims.N]) for P in edited]
    formats.write_tracks(args.out, dims, [FramePointPair(Q, P) for Q, P in zip(track, edited)])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tssw", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    w = sub.add_parser("warp", help="warp a frame sequence from landmark tracks")
    w.add_argument("--frames", required=True, type=Path, help="directory of PNG frames")
    w.add_argument("--tracks", required=True, type=Path, help="landmark track file (JSON)")
    w.add_argument("--out", required=True, type=Path, help="output directory")
    w.add_argument("--alpha", type=float, default=0.8, help="smoothness weight")
    w.add_argument("--beta", type=float, default=1.0, help="landmark fidelity weight")
    w.add_argument("--level", type=int, default=6, help="finest lattice level H")
    w.add_argument("--cg-tol", type=float, default=1e-8)
    w.add_argument("--cg-iters", type=int, default=30)
    w.add_argument("--dump-lattices", action="store_true",
                   help="write control lattices to OUT/lattices")
    w.add_argument("--dump-fields", action="store_true",
                   help="write per-pixel displacement fields to OUT/fields")
    w.add_argument("--literal-sign", action="store_true",
                   help="subtract the smoothness operator (may be indefinite)")
    w.add_argument("--resume-from", type=Path,
                   help="directory holding lattice dumps of frame START-1")
    w.add_argument("--start", type=int, default=1, help="first frame to warp (1-based)")
    w.add_argument("--seed", type=int, default=0)
    w.set_defaults(func=cmd_warp)

    b = sub.add_parser("bench", help="reconstruction-accuracy benchmark")
    b.add_argument("--functions", "--function", action="append",
                   help="comma-separated subset of g1..g5")
    b.add_argument("--samplings", "--sampling", action="append",
                   help="comma-separated subset of R100,C160,F66")
    b.add_argument("--seeds", type=int, default=10, help="number of seeds per cell")
    b.add_argument("--seed", type=int, default=0, help="first seed")
    b.add_argument("--size", type=int, default=512, help="image side in pixels")
    b.add_argument("--level", type=int, default=6)
    b.add_argument("--jitter", type=float, default=2.0, help="max frame-to-frame point motion")
    b.add_argument("--alpha", type=float, default=0.8)
    b.add_argument("--beta", type=float, default=1.0)
    b.add_argument("--out", required=True, type=Path,
                   help="report path (.json); a .tsv table is written beside it")
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("edit", help="produce edited landmark tracks")
    e.add_argument("--engine", required=True, choices=("attract", "expression"))
    e.add_argument("--tracks", required=True, type=Path)
    e.add_argument("--out", required=True, type=Path)
    e.add_argument("--training", type=Path, help="training set (attract engine)")
    e.add_argument("--gender", type=int, default=1, choices=(1, 2))
    e.add_argument("--sigma", type=float, default=5.0)
    e.add_argument("--neighbors", type=int, default=5)
    e.add_argument("--factor", type=float, default=1.0, help="region scale (expression engine)")
    e.add_argument("--region", type=Path, help="JSON list of 0-based landmark indices")
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_edit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FormatError, ValueError, IndexError, FloatingPointError, OSError) as exc:
        print(f"tssw {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
