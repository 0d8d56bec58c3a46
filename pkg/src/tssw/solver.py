"""Per-frame lattice estimation by energy minimisation.

For each direction the new lattice minimises

    ||psi - psi_prev||^2 + alpha * ||grad psi||^2 + beta * sum_k (W_k . psi - z_k)^2

whose normal equations ``(I + beta*sum A_k + alpha*L) psi = psi_prev + beta*sum W_k z_k``
are solved with conjugate gradients, warm-started at ``psi_prev``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from tssw.bspline import ControlLattice, weight_matrix
from tssw.geometry import FramePointPair, LatticeDims, as_points

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 0.8
    beta: float = 1.0
    cg_tol: float = 1e-8
    cg_max_iter: int = 30
    # subtract the smoothness operator instead of adding it (comparison only)
    literal_sign: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.cg_tol > 0:
            raise ValueError(f"cg_tol must be positive, got {self.cg_tol}")
        if self.cg_max_iter < 1:
            raise ValueError(f"cg_max_iter must be at least 1, got {self.cg_max_iter}")


@dataclass
class SparseSystem:
    A: sp.csr_matrix
    b: np.ndarray
    ld: LatticeDims
    x0: np.ndarray
    direction: int = 1


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    rel_residual: float
    converged: bool


def _forward_difference(n: int) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


def difference_operators(m: int, n: int):
    """Forward differences along rows (Dx) and columns (Dy) of a row-major m x n grid."""
    dx = sp.kron(_forward_difference(m), sp.identity(n), format="csr")
    dy = sp.kron(sp.identity(m), _forward_difference(n), format="csr")
    return dx, dy


def laplacian(m: int, n: int) -> sp.csr_matrix:
    if m < 2 or n < 2:
        raise ValueError(f"laplacian needs at least a 2x2 grid, got {m}x{n}")
    dx, dy = difference_operators(m, n)
    return (dx.T @ dx + dy.T @ dy).tocsr()


def constraint_operator(points, ld: LatticeDims):
    """Return ``(sum_k W_k W_k^T, W)`` with ``W`` the (K, m*n) stencil matrix."""
    W = weight_matrix(as_points(points), ld)
    return (W.T @ W).tocsr(), W


def build_system(psi_prev: ControlLattice, points, z, cfg: SolverConfig,
                 operators=None) -> SparseSystem:
    """Assemble the linear system for one direction.

    ``operators`` may carry a precomputed ``(sum A_k, W, L)`` so both
    directions of a frame share the stencil work.
    """
    ld = psi_prev.ld
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if operators is None:
        sum_a, W = constraint_operator(points, ld)
        L = laplacian(ld.m, ld.n)
    else:
        sum_a, W, L = operators
    if W.shape[0] != len(z):
        raise ValueError(f"{W.shape[0]} points but {len(z)} displacements")
    smooth = -cfg.alpha * L if cfg.literal_sign else cfg.alpha * L
    A = (sp.identity(ld.size, format="csr") + cfg.beta * sum_a + smooth).tocsr()
    prev = psi_prev.values.reshape(-1)
    b = prev + cfg.beta * (W.T @ z)
    return SparseSystem(A, b, ld, prev.copy(), psi_prev.direction)


def assemble_system(psi_prev: ControlLattice, pair: FramePointPair, l: int,
                    cfg: SolverConfig) -> SparseSystem:
    if l not in (1, 2):
        raise ValueError(f"direction must be 1 or 2, got {l}")
    return build_system(psi_prev, pair.P, pair.Z[:, l - 1], cfg)


def conjugate_gradient(A, b, x0=None, tol: float = 1e-8, max_iter: int = 30) -> CGResult:
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros_like(b), 0, 0.0, True)
    r = b - A @ x
    rr = r @ r
    rel = np.sqrt(rr) / bnorm
    it = 0
    if rel <= tol:
        return CGResult(x, 0, rel, True)
    p = r.copy()
    while it < max_iter:
        Ap = A @ p
        pAp = p @ Ap
        if pAp == 0.0:
            break
        step = rr / pAp
        x += step * p
        r -= step * Ap
        rr_new = r @ r
        it += 1
        if not (np.isfinite(rr_new) and np.all(np.isfinite(x))):
            raise FloatingPointError(
                f"conjugate gradient produced non-finite values at iteration {it}; "
                "the system is ill-conditioned")
        rel = np.sqrt(rr_new) / bnorm
        if rel <= tol:
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    return CGResult(x, it, float(rel), bool(rel <= tol))


def solve_cg(system: SparseSystem, cfg: SolverConfig) -> ControlLattice:
    res = conjugate_gradient(system.A, system.b, system.x0, cfg.cg_tol, cfg.cg_max_iter)
    if not res.converged:
        log.debug("CG stopped after %d iterations at relative residual %.3g",
                  res.iterations, res.rel_residual)
    return ControlLattice(res.x.reshape(system.ld.shape), system.ld, system.direction)


def energy_terms(psi, psi_prev, points, z, alpha=None, beta=None):
    """Return the data, smoothness and feature terms ``(E_d, E_s, E_f)``."""
    v = psi.values
    ld = psi.ld
    e_d = float(np.sum((v - psi_prev.values) ** 2))
    e_s = float(np.sum(np.diff(v, axis=0) ** 2) + np.sum(np.diff(v, axis=1) ** 2))
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    W = weight_matrix(as_points(points), ld)
    e_f = float(np.sum((W @ v.reshape(-1) - z) ** 2))
    return e_d, e_s, e_f


def total_energy(psi: ControlLattice, psi_prev: ControlLattice, pair, l: int,
                 cfg: SolverConfig) -> float:
    """Energy of ``psi`` for direction ``l``; ``pair`` is a FramePointPair
    or a ``(points, z)`` tuple of positions and per-direction targets."""
    if isinstance(pair, FramePointPair):
        points, z = pair.P, pair.Z[:, l - 1]
    else:
        points, z = pair
    e_d, e_s, e_f = energy_terms(psi, psi_prev, points, z)
    return e_d + cfg.alpha * e_s + cfg.beta * e_f


def estimate_points(prev_x: ControlLattice, prev_y: ControlLattice, points, z_pairs,
                    cfg: SolverConfig, frame: int | None = None):
    """Solve both directions for edited positions ``points`` and (K, 2) targets."""
    ld = prev_x.ld
    if prev_y.ld != ld:
        raise ValueError("previous lattices have different dimensions")
    z_pairs = np.asarray(z_pairs, dtype=np.float64).reshape(-1, 2)
    sum_a, W = constraint_operator(points, ld)
    ops = (sum_a, W, laplacian(ld.m, ld.n))
    out = []
    for l, prev in ((1, prev_x), (2, prev_y)):
        system = build_system(prev, points, z_pairs[:, l - 1], cfg, ops)
        system.direction = l
        lattice = solve_cg(system, cfg)
        lattice.frame = prev.frame + 1 if frame is None else frame
        out.append(lattice)
    return tuple(out)


def estimate_frame(prev_x: ControlLattice, prev_y: ControlLattice, pair: FramePointPair,
                   cfg: SolverConfig, frame: int | None = None):
    return estimate_points(prev_x, prev_y, pair.P, pair.Z, cfg, frame)
