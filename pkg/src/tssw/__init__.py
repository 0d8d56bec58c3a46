"""Temporally coherent B-spline warping of image sequences."""

from tssw.geometry import ImageDims, LatticeDims, lattice_dims, scale_point, displacements
from tssw.bspline import basis, weight_stencil, surface_value
from tssw.mba import ControlLattice, ba_single_level, refine_lattice, mba
from tssw.solver import SolverConfig, estimate_frame, total_energy
from tssw.warp import WarpField, evaluate_warp_field, remap_bicubic, warp_sequence

__version__ = "0.1.0"

__all__ = [
    "ImageDims", "LatticeDims", "lattice_dims", "scale_point", "displacements",
    "basis", "weight_stencil", "surface_value",
    "ControlLattice", "ba_single_level", "refine_lattice", "mba",
    "SolverConfig", "estimate_frame", "total_energy",
    "WarpField", "evaluate_warp_field", "remap_bicubic", "warp_sequence",
]
