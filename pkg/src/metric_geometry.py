"""
Pointwise metric formulas for circle packing metrics.

Conformal factor and radius conversion, unified edge lengths in the three
background geometries, cosine-law corner angles, vertex curvature, face
areas, the Gauss-Bonnet audit and scheme initialization.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Sequence

import numpy as np

from src.halfedge_mesh import Mesh, topology


logger = logging.getLogger(__name__)


class GeometryError(Exception):
    """Base exception for metric and geometry failures"""
    pass


class DomainError(GeometryError):
    """Radius outside the domain of the conformal factor"""
    pass


class DegenerateLength(GeometryError):
    """Edge length formula left its admissible range"""
    pass


class TriangleInequalityViolation(GeometryError):
    """Face lengths do not form a triangle in the background geometry"""
    pass


class InverseUndefined(GeometryError):
    """Requested inverse has no value for this input"""
    pass


class InitializationInfeasible(GeometryError):
    """Scheme cannot reproduce the supplied lengths"""
    pass


class InvalidMetric(GeometryError):
    """Metric document or metric values are inconsistent with the mesh or scheme"""
    pass


class BackgroundGeometry(str, Enum):
    E2 = 'E2'
    H2 = 'H2'
    S2 = 'S2'

    @property
    def curvature_sign(self) -> int:
        """Area coefficient in Gauss-Bonnet: +1 spherical, 0 flat, -1 hyperbolic"""
        return {BackgroundGeometry.E2: 0, BackgroundGeometry.H2: -1, BackgroundGeometry.S2: 1}[self]

    @classmethod
    def parse(cls, value: Any) -> "BackgroundGeometry":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise GeometryError(f"Unknown background geometry: {value}")


class Scheme(str, Enum):
    TANGENTIAL = 'tangential'
    THURSTON = 'thurston'
    INVERSIVE = 'inversive'
    YAMABE = 'yamabe'
    VIRTUAL = 'virtual'
    MIXED = 'mixed'

    @property
    def epsilon(self) -> Optional[int]:
        """Scheme indicator shared by every vertex, None for mixed"""
        if self in (Scheme.TANGENTIAL, Scheme.THURSTON, Scheme.INVERSIVE):
            return 1
        if self is Scheme.YAMABE:
            return 0
        if self is Scheme.VIRTUAL:
            return -1
        return None

    @classmethod
    def parse(cls, value: Any) -> "Scheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise GeometryError(f"Unknown circle packing scheme: {value}")


# Conformal factor

def u_from_gamma(gamma, bg: BackgroundGeometry):
    """
    Discrete conformal factor of a vertex circle radius.

    Args:
        gamma: radius or array of radii
        bg: background geometry

    Returns:
        ln(gamma) in E2, ln tanh(gamma/2) in H2, ln tan(gamma/2) in S2

    Raises:
        DomainError: non-positive radius, or a spherical radius >= pi
    """
    g = np.asarray(gamma, dtype=float)
    if not np.all(np.isfinite(g)) or np.any(g <= 0):
        raise DomainError(f"Radius must be positive and finite, got {gamma}")
    if bg is BackgroundGeometry.E2:
        return np.log(g)
    if bg is BackgroundGeometry.H2:
        return np.log(np.tanh(g / 2.0))
    if np.any(g >= np.pi):
        raise DomainError(f"Spherical radius must be < pi, got {gamma}")
    return np.log(np.tan(g / 2.0))


def gamma_from_u(u, bg: BackgroundGeometry, strict: bool = True):
    """
    Inverse of u_from_gamma.

    In H2 the radius exists only for u < 0. With strict=False those
    entries come back as nan instead of raising DomainError.
    """
    u = np.asarray(u, dtype=float)
    if bg is BackgroundGeometry.E2:
        return np.exp(u)
    if bg is BackgroundGeometry.S2:
        return 2.0 * np.arctan(np.exp(u))
    undefined = u >= 0
    if strict and np.any(undefined):
        raise DomainError("Hyperbolic radius is undefined for u >= 0")
    with np.errstate(divide='ignore', invalid='ignore'):
        gamma = 2.0 * np.arctanh(np.exp(np.minimum(u, 0.0)))
    return np.where(undefined, np.nan, gamma)


def radius_terms(u, eps, bg: BackgroundGeometry):
    """
    Per-vertex radius quantity entering the Hessian, computed from u.

    E2: eps*gamma^2. H2: cosh(gamma)^eps. S2: cos(gamma)^eps.
    Written in x = e^{2u} so that Yamabe and virtual vertices stay defined
    where the radius itself does not.
    """
    x = np.exp(2.0 * np.asarray(u, dtype=float))
    e = np.asarray(eps, dtype=float)
    if bg is BackgroundGeometry.E2:
        return e * x
    if bg is BackgroundGeometry.H2:
        return (1.0 + e * x) / (1.0 - e * x)
    return (1.0 - e * x) / (1.0 + e * x)


def radius_terms_from_gamma(gamma, eps, bg: BackgroundGeometry):
    """Same quantity as radius_terms, from radii; eps=0 entries ignore gamma"""
    g = np.asarray(gamma, dtype=float)
    e = np.asarray(eps, dtype=float)
    flat = e == 0
    g = np.where(flat, 1.0, g)
    if bg is BackgroundGeometry.E2:
        return np.where(flat, 0.0, e * g * g)
    base = np.cosh(g) if bg is BackgroundGeometry.H2 else np.cos(g)
    return np.where(flat, 1.0, base ** e)


# Edge lengths

def edge_length(u_i, u_j, eta, eps_i, eps_j, bg: BackgroundGeometry):
    """
    Unified edge length of a circle packing metric.

    E2: l^2 = 2 eta e^{u_i+u_j} + eps_i e^{2u_i} + eps_j e^{2u_j}
    H2: cosh l = (4 eta e^{u_i+u_j} + (1+x_i)(1+x_j)) / ((1-x_i)(1-x_j))
    S2: cos l = (-4 eta e^{u_i+u_j} + (1-x_i)(1-x_j)) / ((1+x_i)(1+x_j))
    with x = eps e^{2u}.

    Raises:
        DegenerateLength: radicand or cosine argument out of range
    """
    u_i = np.asarray(u_i, dtype=float)
    u_j = np.asarray(u_j, dtype=float)
    eta = np.asarray(eta, dtype=float)
    x_i = np.asarray(eps_i, dtype=float) * np.exp(2.0 * u_i)
    x_j = np.asarray(eps_j, dtype=float) * np.exp(2.0 * u_j)
    cross = eta * np.exp(u_i + u_j)

    if bg is BackgroundGeometry.E2:
        radicand = 2.0 * cross + x_i + x_j
        if np.any(~(radicand > 0)):
            raise DegenerateLength(f"Non-positive squared length (min {np.min(radicand):.3e})")
        return np.sqrt(radicand)

    if bg is BackgroundGeometry.H2:
        den = (1.0 - x_i) * (1.0 - x_j)
        if np.any(~(den > 0)):
            raise DegenerateLength("Hyperbolic length denominator is not positive")
        arg = (4.0 * cross + (1.0 + x_i) * (1.0 + x_j)) / den
        if np.any(~(arg > 1.0)):
            raise DegenerateLength(f"cosh l must exceed 1 (min {np.min(arg):.3e})")
        return np.arccosh(arg)

    den = (1.0 + x_i) * (1.0 + x_j)
    if np.any(~(den > 0)):
        raise DegenerateLength("Spherical length denominator is not positive")
    arg = (-4.0 * cross + (1.0 - x_i) * (1.0 - x_j)) / den
    if np.any(~((arg > -1.0) & (arg < 1.0))):
        raise DegenerateLength("cos l must lie strictly inside (-1, 1)")
    return np.arccos(arg)


def eta_from_length(length, u_i, u_j, eps_i, eps_j, bg: BackgroundGeometry):
    """Solve the unified length formula for eta (it is linear in eta)"""
    length = np.asarray(length, dtype=float)
    u_i = np.asarray(u_i, dtype=float)
    u_j = np.asarray(u_j, dtype=float)
    x_i = np.asarray(eps_i, dtype=float) * np.exp(2.0 * u_i)
    x_j = np.asarray(eps_j, dtype=float) * np.exp(2.0 * u_j)
    scale = np.exp(u_i + u_j)
    if bg is BackgroundGeometry.E2:
        return (length ** 2 - x_i - x_j) / (2.0 * scale)
    if bg is BackgroundGeometry.H2:
        return (np.cosh(length) * (1.0 - x_i) * (1.0 - x_j) - (1.0 + x_i) * (1.0 + x_j)) / (4.0 * scale)
    return ((1.0 - x_i) * (1.0 - x_j) - np.cos(length) * (1.0 + x_i) * (1.0 + x_j)) / (4.0 * scale)


# Angles, curvature, area

def corner_angles(lengths, bg: BackgroundGeometry) -> np.ndarray:
    """
    Corner angles from face edge lengths by the cosine law of `bg`.

    Args:
        lengths: (..., 3) array, lengths[..., a] is the edge opposite corner a

    Returns:
        (..., 3) array of angles, angle a opposite lengths[..., a]

    Raises:
        TriangleInequalityViolation: non-positive length, a strict triangle
            inequality failure, or (S2) a length >= pi or perimeter >= 2 pi
    """
    l = np.asarray(lengths, dtype=float)
    if l.shape[-1] != 3:
        raise ValueError("corner_angles expects lengths with a trailing axis of size 3")
    la, lb, lc = l[..., 0], l[..., 1], l[..., 2]
    valid = (l > 0).all(axis=-1) & (la < lb + lc) & (lb < lc + la) & (lc < la + lb)
    if bg is BackgroundGeometry.S2:
        valid &= (l < np.pi).all(axis=-1) & (l.sum(axis=-1) < 2.0 * np.pi)
    if not np.all(valid):
        bad = np.argwhere(~np.atleast_1d(valid)).ravel()
        raise TriangleInequalityViolation(
            f"{len(bad)} face(s) violate the triangle inequality in {bg.value}, first {bad[:5].tolist()}")

    angles = np.empty_like(l)
    for a in range(3):
        opp = l[..., a]
        s1 = l[..., (a + 1) % 3]
        s2 = l[..., (a + 2) % 3]
        if bg is BackgroundGeometry.E2:
            cos = (s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2)
        elif bg is BackgroundGeometry.H2:
            cos = (np.cosh(s1) * np.cosh(s2) - np.cosh(opp)) / (np.sinh(s1) * np.sinh(s2))
        else:
            cos = (np.cos(opp) - np.cos(s1) * np.cos(s2)) / (np.sin(s1) * np.sin(s2))
        angles[..., a] = np.arccos(np.clip(cos, -1.0, 1.0))
    return angles


def face_lengths(mesh: Mesh, lengths: np.ndarray) -> np.ndarray:
    """Per-face (F, 3) lengths, column a opposite local corner a"""
    return np.asarray(lengths, dtype=float)[mesh.face_edges]


def face_areas(lengths, angles, bg: BackgroundGeometry) -> np.ndarray:
    """E2 by Heron's formula, H2 by angle defect, S2 by angle excess"""
    if bg is BackgroundGeometry.H2:
        return np.pi - np.asarray(angles).sum(axis=-1)
    if bg is BackgroundGeometry.S2:
        return np.asarray(angles).sum(axis=-1) - np.pi
    # numerically stable Heron: sort descending
    l = np.sort(np.asarray(lengths, dtype=float), axis=-1)[..., ::-1]
    a, b, c = l[..., 0], l[..., 1], l[..., 2]
    prod = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    return 0.25 * np.sqrt(np.maximum(prod, 0.0))


def total_area(lengths, angles, bg: BackgroundGeometry) -> float:
    return float(np.sum(face_areas(lengths, angles, bg)))


def vertex_curvatures(mesh: Mesh, angles: np.ndarray) -> np.ndarray:
    """
    Discrete Gauss curvature per vertex.

    Interior vertices: 2 pi minus the incident angle sum.
    Boundary vertices: pi minus the incident angle sum.
    """
    angle_sum = np.bincount(mesh.faces.ravel(), weights=np.asarray(angles).ravel(),
                            minlength=mesh.num_vertices)
    deficit = np.where(mesh.is_boundary_vertex, np.pi, 2.0 * np.pi)
    return deficit - angle_sum


def gauss_bonnet_residual(mesh: Mesh, K: np.ndarray, area: float, bg: BackgroundGeometry) -> float:
    """Sum K + eps_geom * A - 2 pi chi; near zero certifies consistency"""
    chi = topology(mesh).euler_characteristic
    return float(np.sum(K) + bg.curvature_sign * area - 2.0 * np.pi * chi)


# Lambda / eta

def eta_from_lambda(lam, eps_i, eps_j):
    """eta = (e^lambda + eps_i eps_j e^-lambda) / 2"""
    lam = np.asarray(lam, dtype=float)
    product = np.asarray(eps_i, dtype=float) * np.asarray(eps_j, dtype=float)
    return 0.5 * (np.exp(lam) + product * np.exp(-lam))


def lambda_from_eta(eta, eps_i, eps_j):
    """
    Inverse of eta_from_lambda on its monotone branches.

    Product +1 needs eta >= 1 (non-negative branch, arccosh), product 0
    needs eta > 0, product -1 is arcsinh and always defined.

    Raises:
        InverseUndefined: eta outside the branch's range
    """
    eta = np.asarray(eta, dtype=float)
    product = np.asarray(eps_i, dtype=float) * np.asarray(eps_j, dtype=float)
    product, eta = np.broadcast_arrays(product, eta)
    if np.any((product > 0) & (eta < 1.0)):
        raise InverseUndefined("eta must be >= 1 when eps_i * eps_j = +1")
    if np.any((product == 0) & (eta <= 0.0)):
        raise InverseUndefined("eta must be positive when eps_i * eps_j = 0")
    out = np.empty(eta.shape)
    pos = product > 0
    zero = product == 0
    neg = product < 0
    out[pos] = np.arccosh(eta[pos])
    out[zero] = np.log(2.0 * eta[zero])
    out[neg] = np.arcsinh(eta[neg])
    return out if out.ndim else float(out)


# Metric containers

@dataclass
class CirclePackingMetric:
    """
    Circle packing metric carried in conformal-factor form.

    `u` is the state the flow updates; `gamma` is derived from it and is nan
    where the hyperbolic radius has no finite value.
    """
    u: np.ndarray
    epsilon: np.ndarray
    eta: np.ndarray
    bg: BackgroundGeometry
    scheme: Scheme

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.epsilon = np.asarray(self.epsilon, dtype=np.int64)
        self.eta = np.asarray(self.eta, dtype=float)
        self.bg = BackgroundGeometry.parse(self.bg)
        self.scheme = Scheme.parse(self.scheme)

    @classmethod
    def from_gamma(cls, gamma, epsilon, eta, bg: BackgroundGeometry, scheme: Scheme) -> "CirclePackingMetric":
        bg = BackgroundGeometry.parse(bg)
        return cls(u_from_gamma(gamma, bg), epsilon, eta, bg, scheme)

    @property
    def gamma(self) -> np.ndarray:
        return gamma_from_u(self.u, self.bg, strict=False)

    def with_u(self, u: np.ndarray) -> "CirclePackingMetric":
        return CirclePackingMetric(np.array(u, dtype=float), self.epsilon.copy(), self.eta.copy(),
                                   self.bg, self.scheme)

    def edge_lengths(self, mesh: Mesh, u: Optional[np.ndarray] = None) -> np.ndarray:
        u = self.u if u is None else np.asarray(u, dtype=float)
        i, j = mesh.edges[:, 0], mesh.edges[:, 1]
        return edge_length(u[i], u[j], self.eta, self.epsilon[i], self.epsilon[j], self.bg)

    def validate(self, mesh: Mesh):
        """
        Check sizes, scheme consistency and per-face triangle inequality.

        Raises:
            InvalidMetric: any inconsistency
        """
        if self.u.shape != (mesh.num_vertices,) or self.epsilon.shape != (mesh.num_vertices,):
            raise InvalidMetric("u and epsilon need one entry per vertex")
        if self.eta.shape != (mesh.num_edges,):
            raise InvalidMetric("eta needs one entry per edge")
        if not np.all(np.isin(self.epsilon, (-1, 0, 1))):
            raise InvalidMetric("epsilon entries must be -1, 0 or +1")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.eta))):
            raise InvalidMetric("u and eta must be finite")

        expected = self.scheme.epsilon
        if expected is not None and np.any(self.epsilon != expected):
            raise InvalidMetric(f"Scheme {self.scheme.value} requires epsilon = {expected} everywhere")
        if self.scheme is Scheme.TANGENTIAL and not np.allclose(self.eta, 1.0, rtol=0, atol=1e-12):
            raise InvalidMetric("Tangential scheme requires eta = 1")
        if self.scheme is Scheme.THURSTON and np.any((self.eta < 0) | (self.eta > 1)):
            raise InvalidMetric("Thurston scheme requires eta in [0, 1]")
        if self.scheme is Scheme.INVERSIVE and np.any(self.eta <= 0):
            raise InvalidMetric("Inversive scheme requires eta > 0")

        try:
            lengths = self.edge_lengths(mesh)
            corner_angles(face_lengths(mesh, lengths), self.bg)
        except GeometryError as e:
            raise InvalidMetric(f"Metric does not define a valid triangulation: {e}")


@dataclass
class ConformalState:
    """Lengths and angles derived from a conformal factor"""
    u: np.ndarray
    lengths: np.ndarray
    angles: np.ndarray
    areas: np.ndarray = field(default=None)

    @property
    def total_area(self) -> float:
        return float(np.sum(self.areas))


def conformal_state(mesh: Mesh, metric: CirclePackingMetric, u: Optional[np.ndarray] = None) -> ConformalState:
    """
    Recompute lengths, angles and areas for the given conformal factor.

    Raises:
        DegenerateLength, TriangleInequalityViolation
    """
    u = metric.u if u is None else np.asarray(u, dtype=float)
    lengths = metric.edge_lengths(mesh, u)
    fl = face_lengths(mesh, lengths)
    angles = corner_angles(fl, metric.bg)
    return ConformalState(u=u, lengths=lengths, angles=angles, areas=face_areas(fl, angles, metric.bg))


# Initialization

def _incident_min_lengths(mesh: Mesh, lengths: np.ndarray) -> np.ndarray:
    shortest = np.full(mesh.num_vertices, np.inf)
    np.minimum.at(shortest, mesh.edges[:, 0], lengths)
    np.minimum.at(shortest, mesh.edges[:, 1], lengths)
    return shortest


def _tangency_radii(mesh: Mesh, lengths: np.ndarray) -> np.ndarray:
    fl = face_lengths(mesh, lengths)
    radii = np.zeros(mesh.num_vertices)
    counts = np.zeros(mesh.num_vertices)
    for a in range(3):
        # corner a touches the two edges opposite the other corners
        r = 0.5 * (fl[:, (a + 1) % 3] + fl[:, (a + 2) % 3] - fl[:, a])
        np.add.at(radii, mesh.faces[:, a], r)
        np.add.at(counts, mesh.faces[:, a], 1.0)
    return radii / np.maximum(counts, 1.0)


def default_mixed_epsilon(num_vertices: int) -> np.ndarray:
    """(+1, 0, -1) repeating over vertex indices"""
    return np.array([1, 0, -1], dtype=np.int64)[np.arange(num_vertices) % 3]


def init_circle_packing(mesh: Mesh, embedded_lengths: np.ndarray, scheme: Scheme,
                        bg: BackgroundGeometry, epsilon: Optional[Sequence[int]] = None,
                        tolerance: float = 1e-12) -> CirclePackingMetric:
    """
    Build the initial metric of a scheme from per-edge lengths.

    Radii: inversive gamma = min incident length / 3, Thurston
    min incident length / sqrt(2), tangential the mean tangency radius,
    Yamabe and virtual 1. eta is then solved so the metric reproduces
    the lengths (tangential keeps eta = 1 and only approximates them).

    Raises:
        InitializationInfeasible: eta outside the scheme's range, or the
            lengths are not reproduced
        TriangleInequalityViolation: invalid input lengths
    """
    scheme = Scheme.parse(scheme)
    bg = BackgroundGeometry.parse(bg)
    lengths = np.asarray(embedded_lengths, dtype=float)
    if lengths.shape != (mesh.num_edges,):
        raise InitializationInfeasible("Need exactly one length per edge")
    corner_angles(face_lengths(mesh, lengths), bg)

    if scheme is Scheme.MIXED:
        eps = default_mixed_epsilon(mesh.num_vertices) if epsilon is None else np.asarray(epsilon, dtype=np.int64)
        if eps.shape != (mesh.num_vertices,) or not np.all(np.isin(eps, (-1, 0, 1))):
            raise InitializationInfeasible("Mixed scheme needs one epsilon in {-1, 0, 1} per vertex")
    else:
        eps = np.full(mesh.num_vertices, scheme.epsilon, dtype=np.int64)

    shortest = _incident_min_lengths(mesh, lengths)
    if scheme is Scheme.TANGENTIAL:
        gamma = _tangency_radii(mesh, lengths)
    elif scheme is Scheme.THURSTON:
        gamma = shortest / np.sqrt(2.0)
    else:
        gamma = np.where(eps == 1, shortest / 3.0, 1.0)

    try:
        u = u_from_gamma(gamma, bg)
    except DomainError as e:
        raise InitializationInfeasible(f"Initial radii are outside the {bg.value} domain: {e}")

    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    if scheme is Scheme.TANGENTIAL:
        eta = np.ones(mesh.num_edges)
    else:
        eta = eta_from_length(lengths, u[i], u[j], eps[i], eps[j], bg)
        if not np.all(np.isfinite(eta)):
            raise InitializationInfeasible("Solved eta is not finite")
        if scheme is Scheme.THURSTON and np.any((eta < 0) | (eta > 1)):
            raise InitializationInfeasible(
                f"Thurston eta outside [0, 1] (range {eta.min():.4f}..{eta.max():.4f})")
        if scheme is Scheme.INVERSIVE and np.any(eta <= 0):
            raise InitializationInfeasible("Inversive eta must be positive")

    metric = CirclePackingMetric(u, eps, eta, bg, scheme)
    try:
        reproduced = metric.edge_lengths(mesh)
    except DegenerateLength as e:
        raise InitializationInfeasible(f"Initial metric produces degenerate lengths: {e}")
    error = length_reproduction_error(reproduced, lengths)
    if scheme is Scheme.TANGENTIAL:
        logger.info(f"Tangential initialization reproduces lengths to {error:.3e} relative")
    elif error > tolerance * 10:
        raise InitializationInfeasible(f"Initial metric misses the input lengths by {error:.3e} relative")

    logger.info(f"Initialized {scheme.value} metric in {bg.value}: V={mesh.num_vertices} E={mesh.num_edges}")
    return metric


def length_reproduction_error(lengths: np.ndarray, reference: np.ndarray) -> float:
    """Max relative deviation between two per-edge length vectors"""
    if len(reference) == 0:
        return 0.0
    return float(np.max(np.abs(lengths - reference) / np.abs(reference)))


# Serialization

def _edge_key(i: int, j: int) -> str:
    return f"{min(i, j)},{max(i, j)}"


def metric_to_dict(mesh: Mesh, metric: CirclePackingMetric) -> Dict[str, Any]:
    """JSON-ready document; floats keep their shortest round-trip repr"""
    gamma = metric.gamma
    return {
        'bg': metric.bg.value,
        'scheme': metric.scheme.value,
        'epsilon': [int(e) for e in metric.epsilon],
        'u': [float(x) for x in metric.u],
        'gamma': [None if np.isnan(g) else float(g) for g in gamma],
        'eta': {_edge_key(int(i), int(j)): float(metric.eta[e]) for e, (i, j) in enumerate(mesh.edges)},
    }


def metric_from_dict(mesh: Mesh, data: Dict[str, Any]) -> CirclePackingMetric:
    """
    Rebuild a metric from metric_to_dict output.

    `u` takes precedence; without it the radii are converted.

    Raises:
        InvalidMetric: missing keys, unknown edges or wrong sizes
    """
    try:
        bg = BackgroundGeometry.parse(data['bg'])
        scheme = Scheme.parse(data['scheme'])
        epsilon = np.asarray(data['epsilon'], dtype=np.int64)
        eta_map = data['eta']
    except (KeyError, TypeError, ValueError, GeometryError) as e:
        raise InvalidMetric(f"Malformed metric document: {e}")

    if 'u' in data:
        u = np.asarray(data['u'], dtype=float)
    elif 'gamma' in data:
        try:
            u = u_from_gamma(np.asarray(data['gamma'], dtype=float), bg)
        except DomainError as e:
            raise InvalidMetric(f"Invalid radii: {e}")
    else:
        raise InvalidMetric("Metric document needs 'u' or 'gamma'")

    eta = np.full(mesh.num_edges, np.nan)
    for key, value in eta_map.items():
        try:
            i, j = (int(t) for t in key.split(','))
            eta[mesh.edge_index(i, j)] = float(value)
        except (KeyError, ValueError) as e:
            raise InvalidMetric(f"Unknown edge key {key!r}: {e}")
    if np.any(np.isnan(eta)):
        raise InvalidMetric("Metric document is missing eta for some edges")

    metric = CirclePackingMetric(u, epsilon, eta, bg, scheme)
    metric.validate(mesh)
    return metric
