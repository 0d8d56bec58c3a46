"""Landmark editing engines that turn source points Q into edited points P.

Two engines are provided: kernel-weighted attractiveness re-targeting,
driven by a scored training set of distance vectors, and expression
manipulation, which scales the mouth and chin about their centroid.

Landmark and edge indices are 0-based.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from tssw.geometry import ImageDims, as_points

log = logging.getLogger(__name__)

EDGE_COUNT = 174

# 66-landmark layout: jaw 0-16, brows 17-26, nose 27-35, eyes 36-47,
# outer lips 48-59, inner lips 60-65 (no inner corners)
MOUTH_CHIN = tuple(range(6, 11)) + tuple(range(48, 66))
MOUTH_PAIRS = ((61, 64),)
EYE_PAIRS = ((37, 41), (38, 40), (43, 47), (44, 46))


@dataclass
class TrainingSubset:
    vectors: np.ndarray  # (S, E) distance vectors
    scores: np.ndarray  # (S,) beauty scores
    edges: np.ndarray  # (E, 2) landmark index pairs
    gender: int = 1

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(self.vectors) == 0:
            raise ValueError("training subset is empty")
        if len(self.scores) != len(self.vectors):
            raise ValueError(f"{len(self.vectors)} vectors but {len(self.scores)} scores")
        if self.vectors.shape[1] != len(self.edges):
            raise ValueError(f"vectors have {self.vectors.shape[1]} entries "
                             f"but the edge list has {len(self.edges)}")
        if np.any(self.scores < 0):
            raise ValueError("beauty scores must be non-negative")
        if self.gender not in (1, 2):
            raise ValueError(f"gender label must be 1 or 2, got {self.gender}")


@dataclass
class EditParams:
    sigma: float = 5.0
    neighbor_count: int = 5
    factor: float = 1.0
    region: tuple = MOUTH_CHIN

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.neighbor_count < 1:
            raise ValueError(f"neighbor_count must be at least 1, got {self.neighbor_count}")
        if not self.factor > 0:
            raise ValueError(f"manipulation factor must be positive, got {self.factor}")


def delaunay_edges(points, expected: int | None = EDGE_COUNT) -> np.ndarray:
    """Sorted, de-duplicated edges of the Delaunay triangulation of ``points``."""
    pts = as_points(points)
    tri = Delaunay(pts)
    edges = set()
    for simplex in tri.simplices:
        for a in range(3):
            i, j = sorted((int(simplex[a]), int(simplex[(a + 1) % 3])))
            edges.add((i, j))
    out = np.array(sorted(edges), dtype=np.int64)
    if expected is not None and len(out) != expected:
        raise ValueError(f"triangulation has {len(out)} edges, expected {expected}; "
                         "supply a shape whose triangulation has the required edge count")
    return out


def _check_edges(edges, K: int) -> np.ndarray:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges) and (edges.min() < 0 or edges.max() >= K):
        raise IndexError(f"edge list refers to landmarks outside 0..{K - 1}")
    return edges


def distance_vector(points, edges) -> np.ndarray:
    pts = as_points(points)
    edges = _check_edges(edges, len(pts))
    return np.linalg.norm(pts[edges[:, 0]] - pts[edges[:, 1]], axis=1)


def kernel_weights(V, subset: TrainingSubset, sigma: float = 5.0) -> np.ndarray:
    """Score-weighted Gaussian similarity of ``V`` to every training vector."""
    d2 = np.sum((subset.vectors - np.asarray(V, dtype=np.float64)) ** 2, axis=1)
    return subset.scores * np.exp(-d2 / sigma ** 2)


def blend_target_vector(vectors, weights) -> np.ndarray:
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    total = weights.sum()
    if not total > 0:
        raise ValueError("blend weights sum to zero; the target vector is undefined")
    return weights @ vectors / total


def nearest_neighbors(v_neutral, subset: TrainingSubset, count: int) -> np.ndarray:
    """Indices of the ``count`` training vectors closest to the neutral vector."""
    d = np.linalg.norm(subset.vectors - v_neutral, axis=1)
    return np.argsort(d, kind="stable")[:count]


def retarget_vector(V, subset: TrainingSubset, neighbors, sigma: float) -> np.ndarray:
    """Blend of the neighbour vectors weighted by their similarity to ``V``.

    Exponents are shifted by their maximum before exponentiation; the blend
    is invariant to a common factor, and this keeps far-away faces from
    underflowing every weight to zero.
    """
    vecs = subset.vectors[neighbors]
    scores = subset.scores[neighbors]
    expo = -np.sum((vecs - V) ** 2, axis=1) / sigma ** 2
    with np.errstate(invalid="ignore"):
        w = scores * np.exp(expo - expo[scores > 0].max()) if np.any(scores > 0) else scores
    return blend_target_vector(vecs, w)


def _edge_residual_and_jacobian(x, edges, target):
    pts = x.reshape(-1, 2)
    diff = pts[edges[:, 0]] - pts[edges[:, 1]]
    length = np.linalg.norm(diff, axis=1)
    res = length - target
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = diff / length[:, None]
    E = len(edges)
    J = np.zeros((E, x.size))
    rows = np.arange(E)
    for c in range(2):
        J[rows, 2 * edges[:, 0] + c] = unit[:, c]
        J[rows, 2 * edges[:, 1] + c] = -unit[:, c]
    return res, J


def recover_points(V_target, init, edges, max_iter: int = 100, rtol: float = 1e-8,
                   damping: float = 1e-3):
    """Landmark positions whose edge lengths best match ``V_target``.

    Levenberg-Marquardt on ``sum_e (|p_a - p_b| - V_e)^2`` starting from
    ``init``. A step is only accepted when it lowers the cost, so the result
    never does worse than the starting shape.
    """
    init = as_points(init)
    edges = _check_edges(edges, len(init))
    target = np.asarray(V_target, dtype=np.float64).reshape(-1)
    if len(target) != len(edges):
        raise ValueError(f"{len(edges)} edges but target vector has {len(target)} entries")
    x = init.reshape(-1).copy()
    res, J = _edge_residual_and_jacobian(x, edges, target)
    if not np.all(np.isfinite(J)):
        raise FloatingPointError("edge Jacobian is not finite (coincident landmarks)")
    cost = float(res @ res)
    lam = damping
    for _ in range(max_iter):
        if cost == 0.0:
            break
        g = J.T @ res
        JtJ = J.T @ J
        diag = np.diag(JtJ).copy()
        diag[diag == 0] = 1.0
        improved = False
        while lam < 1e12:
            step = np.linalg.solve(JtJ + lam * np.diag(diag), -g)
            x_new = x + step
            res_new, J_new = _edge_residual_and_jacobian(x_new, edges, target)
            cost_new = float(res_new @ res_new)
            if np.isfinite(cost_new) and cost_new < cost and np.all(np.isfinite(J_new)):
                improved = True
                break
            lam *= 10.0
        if not improved:
            break
        decrease = (cost - cost_new) / cost
        x, res, J, cost = x_new, res_new, J_new, cost_new
        lam = max(lam / 10.0, 1e-12)
        if decrease < rtol:
            break
    return x.reshape(-1, 2)


def rigid_align(points, reference) -> np.ndarray:
    """Rotate and translate ``points`` onto ``reference`` (no scaling, no reflection)."""
    src = as_points(points)
    ref = as_points(reference)
    cs, cr = src.mean(axis=0), ref.mean(axis=0)
    U, _, Vt = np.linalg.svd((src - cs).T @ (ref - cr))
    d = np.sign(np.linalg.det(U @ Vt))
    R = U @ np.diag([1.0, d]) @ Vt
    return (src - cs) @ R + cr


def opening(points, pairs) -> float:
    pts = as_points(points)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return float(np.mean(np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)))


def neutral_frame_index(track, mouth_pairs=MOUTH_PAIRS, eye_pairs=EYE_PAIRS) -> int:
    """1-based index of the most neutral frame.

    Scores each frame by its mouth opening plus how far its eye opening
    strays from the sequence median; the earliest minimum wins.
    """
    if len(track) == 0:
        raise ValueError("track is empty")
    mouth = np.array([opening(p, mouth_pairs) for p in track])
    eyes = np.array([opening(p, eye_pairs) for p in track])
    score = mouth + np.abs(eyes - np.median(eyes))
    return int(np.argmin(score)) + 1


def attractiveness_edit(track, subset: TrainingSubset, params: EditParams | None = None,
                        neutral: int | None = None, align: bool = True):
    """Edited landmark sets for every frame of ``track``.

    The neighbour set is chosen once, from the neutral frame, and reused
    for all frames.
    """
    params = params or EditParams()
    edges = subset.edges
    vectors = [distance_vector(Q, edges) for Q in track]
    t_neu = neutral if neutral is not None else neutral_frame_index(track)
    neighbors = nearest_neighbors(vectors[t_neu - 1], subset, params.neighbor_count)
    out = []
    for Q, V in zip(track, vectors):
        target = retarget_vector(V, subset, neighbors, params.sigma)
        P = recover_points(target, Q, edges)
        out.append(rigid_align(P, Q) if align else P)
    return out


def manipulate_expression(points, params: EditParams, dims: ImageDims | None = None,
                          centroid=None) -> np.ndarray:
    """Scale the selected landmarks about their centroid by ``params.factor``."""
    pts = as_points(points).copy()
    region = np.asarray(params.region, dtype=np.int64)
    if len(region) == 0:
        return pts
    if region.min() < 0 or region.max() >= len(pts):
        raise IndexError(f"region refers to landmarks outside 0..{len(pts) - 1}")
    c = pts[region].mean(axis=0) if centroid is None else np.asarray(centroid, dtype=np.float64)
    pts[region] = c + params.factor * (pts[region] - c)
    if dims is not None:
        lo = np.array([1.0, 1.0])
        hi = np.array([dims.M, dims.N], dtype=np.float64)
        clipped = np.clip(pts, lo, hi)
        if np.any(clipped != pts):
            log.warning("manipulated landmarks left the image and were clamped")
        pts = clipped
    return pts
