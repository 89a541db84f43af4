"""
Per-face Hessians of corner angles with respect to conformal factors,
and assembly of the global curvature Hessian dK/du.

Three routes produce face Hessians:
- analytic: -(1/2A) L Theta L^-1 D in every background geometry
- power circle (E2): off-diagonals h_k / l_k from the face's power circle
- closed forms (H2, S2): off-diagonals from the power circle distance in
  hyperbolic or spherical trigonometry, diagonals from the analytic route
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import io as sio
from scipy import sparse

from src.halfedge_mesh import Mesh
from src.metric_geometry import (
    BackgroundGeometry,
    CirclePackingMetric,
    ConformalState,
    GeometryError,
    corner_angles,
    face_lengths,
    radius_terms,
    radius_terms_from_gamma,
)


logger = logging.getLogger(__name__)

# Below this a face or power-circle quantity counts as degenerate
DEGENERACY_TOL = 1e-12


class HessianError(Exception):
    """Base exception for Hessian evaluation"""
    pass


class DegenerateFace(HessianError):
    """Face with zero area or collinear corners"""
    pass


class PowerCircleUndefined(HessianError):
    """No power circle exists for the face in this geometry"""
    pass


@dataclass
class FaceHessian:
    """H[a, b] = d theta_a / d u_b in the face's local corner order"""
    face: int
    H: np.ndarray

    def symmetry_error(self) -> float:
        scale = np.maximum(1.0, np.abs(self.H))
        return float(np.max(np.abs(self.H - self.H.T) / scale))


@dataclass
class PowerCircleData:
    """
    Power circle of a Euclidean face in its local frame.

    Corner 0 sits at the origin, corner 1 on the +x axis, corner 2 above it.
    h[a] is the signed distance from the center to the edge opposite corner
    a, positive on the face's side. d[b, c] is the distance from corner b to
    the foot of the perpendicular on edge bc.
    """
    corners: np.ndarray
    center: np.ndarray
    radius_sq: float
    h: np.ndarray
    d: np.ndarray


def _third(a: int, b: int) -> int:
    return 3 - a - b


def _sigma(bg: BackgroundGeometry) -> float:
    # sign of s(l_a) dl_a/du_b relative to tau
    return -1.0 if bg is BackgroundGeometry.S2 else 1.0


def _s(l: np.ndarray, bg: BackgroundGeometry) -> np.ndarray:
    if bg is BackgroundGeometry.E2:
        return l
    if bg is BackgroundGeometry.H2:
        return np.sinh(l)
    return np.sin(l)


def _analytic(l: np.ndarray, theta: np.ndarray, terms: np.ndarray, bg: BackgroundGeometry) -> np.ndarray:
    """Vectorized -(1/2A) L Theta L^-1 D over a leading face axis"""
    s = _s(l, bg)
    area = 0.5 * np.sin(theta[..., 0]) * s[..., 1] * s[..., 2]
    if np.any(~(np.abs(area) > DEGENERACY_TOL ** 2)):
        raise DegenerateFace("Face with zero area")

    cos = np.cos(theta)
    Theta = np.empty(l.shape + (3,))
    D = np.zeros(l.shape + (3,))
    for a in range(3):
        Theta[..., a, a] = -1.0
        for b in range(3):
            if a == b:
                continue
            c = _third(a, b)
            Theta[..., a, b] = cos[..., c]
            if bg is BackgroundGeometry.E2:
                tau = 0.5 * (l[..., a] ** 2 + terms[..., b] - terms[..., c])
            elif bg is BackgroundGeometry.H2:
                tau = np.cosh(l[..., a]) * terms[..., b] - terms[..., c]
            else:
                tau = np.cos(l[..., a]) * terms[..., b] - terms[..., c]
            D[..., a, b] = _sigma(bg) * tau

    dtheta_dl = -(s[..., :, None] * Theta) / (2.0 * area)[..., None, None]
    dl_du = D / s[..., :, None]
    return dtheta_dl @ dl_du


def face_hessian_analytic(l, theta, gamma, eps, bg: BackgroundGeometry, face: int = -1) -> FaceHessian:
    """
    Analytic face Hessian -(1/2A) L Theta L^-1 D.

    Args:
        l: lengths, l[a] opposite corner a
        theta: corner angles
        gamma: vertex radii (ignored where eps is 0)
        eps: scheme indicators
        bg: background geometry

    Raises:
        DegenerateFace: zero area
    """
    l = np.asarray(l, dtype=float)
    terms = radius_terms_from_gamma(gamma, eps, bg)
    H = _analytic(l, np.asarray(theta, dtype=float), terms, bg)
    return FaceHessian(face=face, H=H)


def euclidean_power_circle(l, gamma, eps) -> PowerCircleData:
    """
    Power circle of a Euclidean face with vertex circles of radius gamma.

    Raises:
        DegenerateFace: collinear corners or invalid lengths
    """
    l = np.asarray(l, dtype=float)
    w = radius_terms_from_gamma(gamma, eps, BackgroundGeometry.E2)
    return _power_circle(l, w)


def _power_circle(l: np.ndarray, w: np.ndarray) -> PowerCircleData:
    try:
        corner_angles(l, BackgroundGeometry.E2)
    except GeometryError as e:
        raise DegenerateFace(str(e))

    x2 = (l[2] ** 2 + l[1] ** 2 - l[0] ** 2) / (2.0 * l[2])
    y2 = np.sqrt(max(l[1] ** 2 - x2 ** 2, 0.0))
    if y2 <= DEGENERACY_TOL * max(l.max(), 1.0):
        raise DegenerateFace("Collinear face corners")
    corners = np.array([[0.0, 0.0], [l[2], 0.0], [x2, y2]])

    # 2 o . p_b = |p_b|^2 - w_b + w_0 for b = 1, 2
    system = 2.0 * corners[1:]
    rhs = np.array([corners[b] @ corners[b] - w[b] + w[0] for b in (1, 2)])
    center = np.linalg.solve(system, rhs)
    radius_sq = float(center @ center - w[0])

    h = np.empty(3)
    d = np.zeros((3, 3))
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        edge = corners[c] - corners[b]
        t = edge / np.linalg.norm(edge)
        n = np.array([-t[1], t[0]])
        if (corners[a] - corners[b]) @ n < 0:
            n = -n
        h[a] = (center - corners[b]) @ n
        d[b, c] = (center - corners[b]) @ t
        d[c, b] = (center - corners[c]) @ (-t)
    return PowerCircleData(corners=corners, center=center, radius_sq=radius_sq, h=h, d=d)


def face_hessian_geometric_e2(pc: PowerCircleData, l, face: int = -1) -> FaceHessian:
    """Off-diagonal (a, b) = h_c / l_c; diagonal -(h_b/l_b + h_c/l_c)"""
    l = np.asarray(l, dtype=float)
    ratio = pc.h / l
    H = np.empty((3, 3))
    for a in range(3):
        for b in range(3):
            if a == b:
                H[a, a] = -(ratio.sum() - ratio[a])
            else:
                H[a, b] = ratio[_third(a, b)]
    return FaceHessian(face=face, H=H)


def length_derivative_splits(pc: PowerCircleData) -> np.ndarray:
    """d[b, c] = dl_bc / du_b; the diagonal is zero"""
    return pc.d.copy()


def _closed_form_off_diagonals(l: np.ndarray, C: np.ndarray, bg: BackgroundGeometry) -> np.ndarray:
    """
    Closed-form off-diagonals tan(h)|tanh(h) * sqrt(Q) / s(l_c)^2 for H2 and S2.

    N, D give the power circle radius, Q is the radicand of the vertex
    term and the sign of h follows which side of edge c the center lies on.
    """
    if bg is BackgroundGeometry.H2:
        ch = np.cosh(l)
        s2 = np.sinh(l) ** 2
        N = 1.0 + 2.0 * ch.prod() - (ch ** 2).sum()
        D = sum(C[a] ** 2 * (1.0 - ch[a] ** 2) for a in range(3))
        D += 2.0 * sum(C[(a + 1) % 3] * C[(a + 2) % 3] * (ch[(a + 1) % 3] * ch[(a + 2) % 3] - ch[a])
                       for a in range(3))
        if N <= DEGENERACY_TOL or D <= DEGENERACY_TOL:
            raise PowerCircleUndefined(f"Hyperbolic power circle undefined (N={N:.3e}, D={D:.3e})")
    else:
        ch = np.cos(l)
        s2 = np.sin(l) ** 2
        N = 1.0 + 2.0 * ch.prod() - (ch ** 2).sum()
        D = sum(C[a] ** 2 * s2[a] for a in range(3))
        D += 2.0 * sum(C[(a + 1) % 3] * C[(a + 2) % 3] * (ch[(a + 1) % 3] * ch[(a + 2) % 3] - ch[a])
                       for a in range(3))
        if N <= DEGENERACY_TOL:
            raise PowerCircleUndefined(f"Spherical power circle undefined (N={N:.3e})")

    H = np.zeros((3, 3))
    for a in range(3):
        for b in range(a + 1, 3):
            c = _third(a, b)
            if bg is BackgroundGeometry.H2:
                P = ((ch[a] * ch[c] - ch[b]) * C[a] + (ch[b] * ch[c] - ch[a]) * C[b] - s2[c] * C[c])
                Q = 2.0 * C[a] * C[b] * ch[c] - C[a] ** 2 - C[b] ** 2
            else:
                P = ((ch[a] * ch[c] - ch[b]) * C[a] + (ch[b] * ch[c] - ch[a]) * C[b] + s2[c] * C[c])
                Q = C[a] ** 2 + C[b] ** 2 - 2.0 * C[a] * C[b] * ch[c]
            if Q <= DEGENERACY_TOL:
                raise PowerCircleUndefined(f"Vertex radicand is not positive on edge {c} (Q={Q:.3e})")
            if bg is BackgroundGeometry.H2:
                ratio = (N * Q - D * s2[c]) / (N * Q)
            else:
                ratio = (D * s2[c] - N * Q) / (N * Q)
            distance = np.copysign(np.sqrt(max(ratio, 0.0)), P)
            H[a, b] = H[b, a] = distance * np.sqrt(Q) / s2[c]
    return H


def _geometric_curved(l, gamma, eps, bg: BackgroundGeometry, face: int) -> FaceHessian:
    l = np.asarray(l, dtype=float)
    C = radius_terms_from_gamma(gamma, eps, bg)
    off = _closed_form_off_diagonals(l, C, bg)
    try:
        theta = corner_angles(l, bg)
    except GeometryError as e:
        raise DegenerateFace(str(e))
    H = _analytic(l, theta, C, bg)
    mask = ~np.eye(3, dtype=bool)
    H[mask] = off[mask]
    return FaceHessian(face=face, H=H)


def face_hessian_geometric_h2(l, gamma, eps, face: int = -1) -> FaceHessian:
    """
    Hyperbolic closed form: off-diagonals tanh(h_c) sqrt(Q) / sinh^2(l_c).

    Raises:
        PowerCircleUndefined: N, D or Q not positive
    """
    return _geometric_curved(l, gamma, eps, BackgroundGeometry.H2, face)


def face_hessian_geometric_s2(l, gamma, eps, face: int = -1) -> FaceHessian:
    """Spherical closed form: off-diagonals tan(h_c) sqrt(Q) / sin^2(l_c)"""
    return _geometric_curved(l, gamma, eps, BackgroundGeometry.S2, face)


def face_hessian_from_terms(l, theta, terms, bg: BackgroundGeometry, route: str = 'analytic',
                            face: int = -1) -> FaceHessian:
    """
    Face Hessian from radius terms (see radius_terms) instead of radii.

    Defined wherever u is, including H2 vertices whose radius is infinite.

    Raises:
        DegenerateFace: zero area or collinear corners
        PowerCircleUndefined: curved closed form undefined
    """
    l = np.asarray(l, dtype=float)
    theta = np.asarray(theta, dtype=float)
    terms = np.asarray(terms, dtype=float)
    if route == 'analytic':
        return FaceHessian(face=face, H=_analytic(l, theta, terms, bg))
    if route != 'geometric':
        raise ValueError(f"Unknown Hessian route: {route}")
    if bg is BackgroundGeometry.E2:
        return face_hessian_geometric_e2(_power_circle(l, terms), l, face)
    H = _analytic(l, theta, terms, bg)
    mask = ~np.eye(3, dtype=bool)
    H[mask] = _closed_form_off_diagonals(l, terms, bg)[mask]
    return FaceHessian(face=face, H=H)


def face_hessians(mesh: Mesh, state: ConformalState, metric: CirclePackingMetric,
                  route: str = 'analytic') -> np.ndarray:
    """
    Face Hessians (F, 3, 3) for the current state.

    `route` is 'analytic' (vectorized) or 'geometric' (power circle in E2,
    closed forms in H2 and S2, evaluated face by face).
    """
    fl = face_lengths(mesh, state.lengths)
    terms = radius_terms(state.u, metric.epsilon, metric.bg)[mesh.faces]
    if route == 'analytic':
        return _analytic(fl, state.angles, terms, metric.bg)
    if route != 'geometric':
        raise ValueError(f"Unknown Hessian route: {route}")

    out = np.empty((mesh.num_faces, 3, 3))
    for f in range(mesh.num_faces):
        out[f] = face_hessian_from_terms(fl[f], state.angles[f], terms[f], metric.bg, route, f).H
    return out


def assemble_global(mesh: Mesh, hessians: np.ndarray) -> sparse.csr_matrix:
    """
    Global dK/du as a symmetric sparse matrix.

    K = 2 pi (or pi) minus the angle sums, so each face contributes its
    symmetrized Hessian with a flipped sign.
    """
    H = np.asarray(hessians, dtype=float)
    sym = 0.5 * (H + np.swapaxes(H, -1, -2))
    rows = np.broadcast_to(mesh.faces[:, :, None], sym.shape).ravel()
    cols = np.broadcast_to(mesh.faces[:, None, :], sym.shape).ravel()
    n = mesh.num_vertices
    matrix = sparse.coo_matrix((-sym.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    matrix.sum_duplicates()
    return matrix


def dump_matrix_market(matrix: sparse.spmatrix, path: str):
    """Write a symmetric real Matrix Market coordinate file"""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    sio.mmwrite(str(out), sparse.coo_matrix(matrix), field='real', symmetry='symmetric')
    logger.info(f"Hessian written to {out}")
