"""
Finite-difference oracles for the metric derivatives.

Central differences of corner_angles composed with edge_length certify the
analytic and geometric face Hessians, and differences of edge_length
certify the power-circle length splits.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from src.halfedge_mesh import Mesh
from src.hessian_assembly import (
    HessianError,
    PowerCircleUndefined,
    face_hessian_from_terms,
)
from src.metric_geometry import (
    BackgroundGeometry,
    CirclePackingMetric,
    GeometryError,
    Scheme,
    corner_angles,
    edge_length,
    gamma_from_u,
    radius_terms,
    u_from_gamma,
)


logger = logging.getLogger(__name__)

ANGLE_MARGIN = 0.05
MAX_ATTEMPTS_PER_SAMPLE = 500

GAMMA_RANGE = {
    BackgroundGeometry.E2: (0.2, 2.0),
    BackgroundGeometry.H2: (0.2, 2.0),
    BackgroundGeometry.S2: (0.2, 1.2),
}
ETA_RANGE = {
    Scheme.TANGENTIAL: (1.0, 1.0),
    Scheme.THURSTON: (0.0, 1.0),
    Scheme.INVERSIVE: (0.5, 2.0),
    Scheme.YAMABE: (0.2, 2.0),
    Scheme.VIRTUAL: (1.0, 4.0),
    Scheme.MIXED: (1.0, 4.0),
}


class OracleError(Exception):
    """Base exception for oracle evaluation"""
    pass


class DegenerateNeighborhood(OracleError):
    """The face leaves the admissible region within the difference step"""
    pass


@dataclass
class OracleReport:
    """Worst-case agreement between a derivative route and its reference"""
    route: str
    bg: str
    scheme: str
    samples: int
    max_abs_error: float = 0.0
    max_rel_error: float = 0.0
    max_symmetry_error: float = 0.0
    rejected: int = 0
    worst_case: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'route': self.route,
            'bg': self.bg,
            'scheme': self.scheme,
            'samples': self.samples,
            'max_abs_error': self.max_abs_error,
            'max_rel_error': self.max_rel_error,
            'max_symmetry_error': self.max_symmetry_error,
            'rejected': self.rejected,
            'worst_case': self.worst_case,
        }


@dataclass
class FaceSamples:
    """Batch of faces in local corner order; eta[:, a] is on the edge opposite corner a"""
    u: np.ndarray
    eta: np.ndarray
    eps: np.ndarray
    bg: BackgroundGeometry
    rejected: int = 0

    @property
    def gamma(self) -> np.ndarray:
        return gamma_from_u(self.u, self.bg, strict=False)

    @property
    def terms(self) -> np.ndarray:
        """Radius terms from u; finite even where gamma is not"""
        return radius_terms(self.u, self.eps, self.bg)

    def __len__(self) -> int:
        return len(self.u)


def relative_error(actual, reference) -> np.ndarray:
    """|actual - reference| / max(1, |reference|)"""
    reference = np.asarray(reference, dtype=float)
    return np.abs(np.asarray(actual) - reference) / np.maximum(1.0, np.abs(reference))


def local_lengths(u, eta, eps, bg: BackgroundGeometry) -> np.ndarray:
    """Face lengths (..., 3) from local conformal factors"""
    u = np.asarray(u, dtype=float)
    eta = np.asarray(eta, dtype=float)
    eps = np.asarray(eps, dtype=float)
    out = np.empty(np.broadcast_shapes(u.shape, eta.shape))
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        out[..., a] = edge_length(u[..., b], u[..., c], eta[..., a], eps[..., b], eps[..., c], bg)
    return out


def fd_face_hessian(u, eta, eps, bg: BackgroundGeometry, h: float = 1e-6) -> np.ndarray:
    """
    Central-difference d theta_a / d u_b for one face or a batch of faces.

    Raises:
        DegenerateNeighborhood: a perturbed face is invalid
    """
    u = np.asarray(u, dtype=float)
    H = np.empty(u.shape + (3,))
    try:
        for b in range(3):
            up = u.copy()
            down = u.copy()
            up[..., b] += h
            down[..., b] -= h
            theta_up = corner_angles(local_lengths(up, eta, eps, bg), bg)
            theta_down = corner_angles(local_lengths(down, eta, eps, bg), bg)
            H[..., :, b] = (theta_up - theta_down) / (2.0 * h)
    except GeometryError as e:
        raise DegenerateNeighborhood(f"Face invalid within step {h}: {e}")
    return H


def fd_edge_length_derivative(u_i, u_j, eta, eps_i, eps_j, bg: BackgroundGeometry, h: float = 1e-6):
    """(dl/du_i, dl/du_j) by central differences"""
    try:
        d_i = (edge_length(u_i + h, u_j, eta, eps_i, eps_j, bg)
               - edge_length(u_i - h, u_j, eta, eps_i, eps_j, bg)) / (2.0 * h)
        d_j = (edge_length(u_i, u_j + h, eta, eps_i, eps_j, bg)
               - edge_length(u_i, u_j - h, eta, eps_i, eps_j, bg)) / (2.0 * h)
    except GeometryError as e:
        raise DegenerateNeighborhood(f"Edge invalid within step {h}: {e}")
    return d_i, d_j


def _scheme_epsilon(scheme: Scheme, rng: np.random.Generator) -> np.ndarray:
    if scheme is Scheme.MIXED:
        return rng.integers(-1, 2, size=3)
    return np.full(3, scheme.epsilon)


def _acceptable(lengths: np.ndarray, angles: np.ndarray, bg: BackgroundGeometry) -> bool:
    if np.any(angles < ANGLE_MARGIN) or np.any(angles > np.pi - ANGLE_MARGIN):
        return False
    if bg is BackgroundGeometry.S2 and np.any(lengths > np.pi - ANGLE_MARGIN):
        return False
    return True


def sample_faces(bg: BackgroundGeometry, scheme: Scheme, count: int, seed: Optional[int] = 0,
                 require_power_circle: bool = False) -> FaceSamples:
    """
    Seeded random valid faces with well-conditioned angles.

    Radii are drawn from GAMMA_RANGE[bg] and eta from ETA_RANGE[scheme];
    faces that are invalid, have an angle within ANGLE_MARGIN of 0 or pi,
    or (optionally) have no closed-form power circle are redrawn.

    Raises:
        OracleError: too many rejections
    """
    bg = BackgroundGeometry.parse(bg)
    scheme = Scheme.parse(scheme)
    rng = np.random.default_rng(seed)
    g_lo, g_hi = GAMMA_RANGE[bg]
    e_lo, e_hi = ETA_RANGE[scheme]
    us, etas, epss = [], [], []
    rejected = 0
    while len(us) < count:
        if rejected > MAX_ATTEMPTS_PER_SAMPLE * count:
            raise OracleError(f"Could not draw {count} valid {bg.value}/{scheme.value} faces")
        gamma = rng.uniform(g_lo, g_hi, size=3)
        eta = rng.uniform(e_lo, e_hi, size=3)
        eps = _scheme_epsilon(scheme, rng)
        u = u_from_gamma(gamma, bg)
        try:
            lengths = local_lengths(u, eta, eps, bg)
            angles = corner_angles(lengths, bg)
            if require_power_circle and bg is not BackgroundGeometry.E2:
                face_hessian_from_terms(lengths, angles, radius_terms(u, eps, bg), bg, 'geometric')
        except (GeometryError, HessianError) as e:
            rejected += 1
            logger.debug(f"Rejected face: {e}")
            continue
        if not _acceptable(lengths, angles, bg):
            rejected += 1
            continue
        us.append(u)
        etas.append(eta)
        epss.append(eps)

    logger.info(f"Sampled {count} {bg.value}/{scheme.value} faces, rejected {rejected}")
    return FaceSamples(u=np.array(us), eta=np.array(etas), eps=np.array(epss, dtype=np.int64),
                       bg=bg, rejected=rejected)


def _worst(errors) -> float:
    """Largest error; any non-finite entry counts as infinitely wrong"""
    errors = np.asarray(errors, dtype=float)
    if not np.all(np.isfinite(errors)):
        return float('inf')
    return float(np.max(errors))


def compare_samples(samples: FaceSamples, route: str = 'analytic', reference: str = 'fd',
                    h: float = 1e-6, scheme: str = '') -> OracleReport:
    """
    Compare a Hessian route against central differences or the analytic route.

    Faces whose power circle is undefined are counted as rejected.
    """
    bg = samples.bg
    lengths = local_lengths(samples.u, samples.eta, samples.eps, bg)
    angles = corner_angles(lengths, bg)
    terms = samples.terms
    if reference == 'fd':
        expected = fd_face_hessian(samples.u, samples.eta, samples.eps, bg, h)

    report = OracleReport(route=route, bg=bg.value, scheme=scheme, samples=0, rejected=samples.rejected)
    for n in range(len(samples)):
        try:
            actual = face_hessian_from_terms(lengths[n], angles[n], terms[n], bg, route).H
        except PowerCircleUndefined:
            report.rejected += 1
            continue
        if reference == 'fd':
            ref = expected[n]
        else:
            ref = face_hessian_from_terms(lengths[n], angles[n], terms[n], bg).H
        abs_err = _worst(np.abs(actual - ref))
        rel_err = _worst(relative_error(actual, ref))
        sym_err = _worst(relative_error(actual, actual.T))
        report.samples += 1
        report.max_symmetry_error = max(report.max_symmetry_error, sym_err)
        report.max_abs_error = max(report.max_abs_error, abs_err)
        if rel_err > report.max_rel_error:
            report.max_rel_error = rel_err
            report.worst_case = {
                'u': samples.u[n].tolist(),
                'eta': samples.eta[n].tolist(),
                'eps': samples.eps[n].tolist(),
                'lengths': lengths[n].tolist(),
            }
    return report


def check_random_faces(bg: BackgroundGeometry, scheme: Scheme, samples: int = 1000, seed: Optional[int] = 0,
                       h: float = 1e-6, route: str = 'analytic', reference: str = 'fd') -> OracleReport:
    bg = BackgroundGeometry.parse(bg)
    scheme = Scheme.parse(scheme)
    batch = sample_faces(bg, scheme, samples, seed, require_power_circle=(route == 'geometric'))
    return compare_samples(batch, route, reference, h, scheme.value)


def check_mesh_faces(mesh: Mesh, metric: CirclePackingMetric, samples: Optional[int] = None,
                     seed: Optional[int] = 0, h: float = 1e-6) -> OracleReport:
    """Analytic face Hessians of a mesh metric against central differences"""
    rng = np.random.default_rng(seed)
    faces = np.arange(mesh.num_faces)
    if samples is not None and samples < mesh.num_faces:
        faces = np.sort(rng.choice(mesh.num_faces, size=samples, replace=False))
    batch = FaceSamples(
        u=metric.u[mesh.faces[faces]],
        eta=metric.eta[mesh.face_edges[faces]],
        eps=metric.epsilon[mesh.faces[faces]],
        bg=metric.bg,
    )
    report = compare_samples(batch, 'analytic', 'fd', h, metric.scheme.value)
    logger.info(f"Mesh oracle over {report.samples} faces: max relative error {report.max_rel_error:.3e}")
    return report
