"""Planar layout of flat disk metrics and the conformality audit"""
import logging
from collections import deque
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from src.halfedge_mesh import Mesh, topology


logger = logging.getLogger(__name__)


class LayoutError(Exception):
    """Base exception for planar layout"""
    pass


class NotADisk(LayoutError):
    pass


class NotFlat(LayoutError):
    pass


class PlacementAmbiguity(LayoutError):
    """Two-circle intersection is degenerate"""
    pass


@dataclass
class PlanarEmbedding:
    uv: np.ndarray
    max_relative_deviation: float
    min_signed_area: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'max_relative_deviation': self.max_relative_deviation,
            'min_signed_area': self.min_signed_area,
        }


def _place_left(q: np.ndarray, p: np.ndarray, r_q: float, r_p: float) -> np.ndarray:
    """Point at distance r_q from q and r_p from p, left of the ray q->p"""
    offset = p - q
    d = float(np.hypot(offset[0], offset[1]))
    if d <= 0:
        raise PlacementAmbiguity("Coincident anchor points")
    e = offset / d
    a = (r_q * r_q - r_p * r_p + d * d) / (2.0 * d)
    h_sq = r_q * r_q - a * a
    if h_sq <= 1e-14 * r_q * r_q:
        raise PlacementAmbiguity(f"Circles do not intersect transversally (h^2 = {h_sq:.3e})")
    n = np.array([-e[1], e[0]])
    return q + a * e + np.sqrt(h_sq) * n


def signed_areas(mesh: Mesh, uv: np.ndarray) -> np.ndarray:
    p = uv[mesh.faces]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def isometry_deviation(mesh: Mesh, uv: np.ndarray, lengths: np.ndarray) -> float:
    """Max relative difference between layout edge lengths and the metric"""
    if mesh.num_edges == 0:
        return 0.0
    laid = np.linalg.norm(uv[mesh.edges[:, 0]] - uv[mesh.edges[:, 1]], axis=1)
    return float(np.max(np.abs(laid - lengths) / lengths))


def embed_disk(mesh: Mesh, lengths: np.ndarray, K_interior_max: float, flat_tol: float = 1e-4) -> PlanarEmbedding:
    """
    Lay out a flat disk metric in the plane by breadth-first face unfolding.

    Face 0 is placed canonically: its first corner at the origin, the
    second on the +x axis, the third above. Each neighbouring face then
    places its free corner to the left of the shared edge.

    Args:
        mesh: disk-topology mesh
        lengths: per-edge lengths of the metric
        K_interior_max: max |K| over interior vertices
        flat_tol: accepted interior curvature

    Raises:
        NotADisk: chi != 1 or more than one boundary loop
        NotFlat: interior curvature above flat_tol
        PlacementAmbiguity: degenerate placement
    """
    top = topology(mesh)
    if top.euler_characteristic != 1 or top.num_boundary_loops != 1:
        raise NotADisk(f"Layout needs a disk, got chi={top.euler_characteristic} "
                       f"with {top.num_boundary_loops} boundary loop(s)")
    if abs(K_interior_max) > flat_tol:
        raise NotFlat(f"Interior curvature {K_interior_max:.3e} exceeds {flat_tol:.1e}")

    lengths = np.asarray(lengths, dtype=float)

    def length(i: int, j: int) -> float:
        return float(lengths[mesh.edge_index(i, j)])

    uv = np.full((mesh.num_vertices, 2), np.nan)
    a, b, c = mesh.faces[0].tolist()
    uv[a] = (0.0, 0.0)
    uv[b] = (length(a, b), 0.0)
    uv[c] = _place_left(uv[a], uv[b], length(a, c), length(b, c))

    placed_faces = np.zeros(mesh.num_faces, dtype=bool)
    placed_faces[0] = True
    queue = deque([0])
    while queue:
        f = queue.popleft()
        for k in range(3):
            twin = int(mesh.he_twin[3 * f + k])
            g = int(mesh.he_face[twin])
            if g < 0 or placed_faces[g]:
                continue
            q = int(mesh.he_origin[twin])
            p = int(mesh.he_origin[mesh.he_next[twin]])
            w = int(mesh.he_origin[mesh.he_prev[twin]])
            if np.isnan(uv[w, 0]):
                uv[w] = _place_left(uv[q], uv[p], length(q, w), length(p, w))
            placed_faces[g] = True
            queue.append(g)

    deviation = isometry_deviation(mesh, uv, lengths)
    areas = signed_areas(mesh, uv)
    logger.info(f"Layout: max relative edge deviation {deviation:.3e}, min signed area {areas.min():.3e}")
    return PlanarEmbedding(uv=uv, max_relative_deviation=deviation, min_signed_area=float(areas.min()))


def angle_log_ratios(before: np.ndarray, after: np.ndarray) -> np.ndarray:
    """Per-corner log(after / before)"""
    return np.log(np.asarray(after, dtype=float) / np.asarray(before, dtype=float)).ravel()


def angle_ratio_histogram(log_ratios: np.ndarray, bins: int = 20) -> Dict[str, Any]:
    """Histogram of log angle ratios, plus the max magnitude"""
    values = np.asarray(log_ratios, dtype=float)
    if values.size == 0:
        return {'counts': [], 'edges': [], 'max_abs': 0.0}
    spread = max(float(np.max(np.abs(values))), 1e-12)
    counts, edges = np.histogram(values, bins=bins, range=(-spread, spread))
    return {'counts': counts.tolist(), 'edges': edges.tolist(), 'max_abs': float(np.max(np.abs(values)))}
