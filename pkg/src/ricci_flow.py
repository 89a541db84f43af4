"""
Unified discrete surface Ricci flow.

Newton (or gradient) iteration on the conformal factor u driving the
vertex curvature K toward a target Kbar, with step backtracking and
optional Delaunay edge flips for Euclidean Yamabe metrics.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

from src.artifacts import write_iteration_log
from src.halfedge_mesh import Mesh, topology
from src.hessian_assembly import HessianError, assemble_global, face_hessians
from src.metric_geometry import (
    BackgroundGeometry,
    CirclePackingMetric,
    ConformalState,
    GeometryError,
    Scheme,
    conformal_state,
    corner_angles,
    eta_from_length,
    vertex_curvatures,
)
from src.sparse_solver import LinearSystem, SolverError, solve


logger = logging.getLogger(__name__)

DELAUNAY_TOL = 1e-12


class FlowConfigError(Exception):
    """Invalid flow configuration or violated run precondition"""
    pass


class FlowStatus(str, Enum):
    CONVERGED = 'converged'
    MAX_ITER = 'max_iter'
    DEGENERATE = 'degenerate'
    SOLVER_FAILURE = 'solver_failure'


@dataclass
class FlowConfig:
    """Flow parameters; defaults are step 0.5 and threshold 1e-6"""
    step_length: float = 0.5
    threshold: float = 1e-6
    max_iterations: int = 200
    method: str = 'newton'
    surgery: str = 'off'
    backtracking: bool = True
    max_halvings: int = 20
    gradient_fallback: bool = True
    hessian_route: str = 'analytic'
    solver_tol: float = 1e-10
    solver_max_iter: Optional[int] = None
    log_path: Optional[str] = None

    def __post_init__(self):
        if not (0 < self.step_length <= 1):
            raise FlowConfigError(f"step_length must be in (0, 1], got {self.step_length}")
        if not self.threshold > 0:
            raise FlowConfigError(f"threshold must be positive, got {self.threshold}")
        if not isinstance(self.max_iterations, int) or self.max_iterations < 0:
            raise FlowConfigError(f"max_iterations must be a non-negative integer, got {self.max_iterations}")
        if self.method not in ('newton', 'gradient'):
            raise FlowConfigError(f"method must be newton or gradient, got {self.method}")
        if self.surgery not in ('off', 'delaunay_e2'):
            raise FlowConfigError(f"surgery must be off or delaunay_e2, got {self.surgery}")
        if self.hessian_route not in ('analytic', 'geometric'):
            raise FlowConfigError(f"hessian_route must be analytic or geometric, got {self.hessian_route}")
        if self.max_halvings < 0:
            raise FlowConfigError("max_halvings must be non-negative")
        if not self.solver_tol > 0:
            raise FlowConfigError("solver_tol must be positive")

    @classmethod
    def from_config(cls, config: Dict[str, Any], **overrides) -> "FlowConfig":
        """Build from the `flow` and `solver` sections; None overrides are ignored"""
        flow = config.get('flow', {})
        solver = config.get('solver', {})
        values = {
            'step_length': flow.get('step_length', 0.5),
            'threshold': flow.get('threshold', 1e-6),
            'max_iterations': flow.get('max_iterations', 200),
            'method': flow.get('method', 'newton'),
            'surgery': flow.get('surgery', 'off'),
            'backtracking': flow.get('backtracking', True),
            'max_halvings': flow.get('max_halvings', 20),
            'gradient_fallback': flow.get('gradient_fallback', True),
            'hessian_route': flow.get('hessian_route', 'analytic'),
            'solver_tol': solver.get('tol', 1e-10),
            'solver_max_iter': solver.get('max_iter'),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class TargetValidation:
    """Outcome of validate_target; `ok` is False when any violation is listed"""
    ok: bool
    target_sum: float
    expected_sum: float
    sum_violation: Optional[str] = None
    bound_violations: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'ok': self.ok,
            'target_sum': self.target_sum,
            'expected_sum': self.expected_sum,
            'sum_violation': self.sum_violation,
            'bound_violations': self.bound_violations,
        }


@dataclass
class FlowResult:
    u_final: np.ndarray
    metric_final: CirclePackingMetric
    lengths: np.ndarray
    mesh: Mesh
    iterations: int
    error_history: List[float]
    status: FlowStatus
    flips: int = 0
    message: str = ''

    @property
    def converged(self) -> bool:
        return self.status is FlowStatus.CONVERGED

    @property
    def final_error(self) -> float:
        return self.error_history[-1] if self.error_history else float('nan')

    def to_dict(self) -> Dict[str, Any]:
        return {
            'status': self.status.value,
            'iterations': self.iterations,
            'final_error': self.final_error,
            'error_history': [float(e) for e in self.error_history],
            'flips': self.flips,
            'message': self.message,
        }


def validate_target(mesh: Mesh, target, bg: BackgroundGeometry, tol: float = 1e-9) -> TargetValidation:
    """
    Check a target curvature against Gauss-Bonnet and per-vertex bounds.

    E2 needs sum Kbar = 2 pi chi; H2 needs sum Kbar > 2 pi chi and S2
    sum Kbar < 2 pi chi (positive area). Interior targets must be below
    2 pi and boundary targets below pi. Never raises.
    """
    chi = topology(mesh).euler_characteristic
    expected = 2.0 * np.pi * chi
    try:
        values = np.asarray(target, dtype=float).ravel()
    except (TypeError, ValueError) as e:
        return TargetValidation(False, float('nan'), expected, sum_violation=f"Target is not numeric: {e}")
    if len(values) != mesh.num_vertices:
        return TargetValidation(False, float('nan'), expected,
                                sum_violation=f"Target has {len(values)} entries for {mesh.num_vertices} vertices")

    violations = []
    for v in np.flatnonzero(~np.isfinite(values)).tolist():
        violations.append({'vertex': v, 'value': float(values[v]), 'bound': 'finite'})
    bounds = np.where(mesh.is_boundary_vertex, np.pi, 2.0 * np.pi)
    for v in np.flatnonzero(np.isfinite(values) & (values >= bounds)).tolist():
        violations.append({'vertex': v, 'value': float(values[v]), 'bound': float(bounds[v])})

    total = float(np.sum(values))
    sum_violation = None
    if bg is BackgroundGeometry.E2 and not abs(total - expected) <= tol:
        sum_violation = f"Sum of targets {total:.12g} differs from 2*pi*chi = {expected:.12g}"
    elif bg is BackgroundGeometry.H2 and not total > expected:
        sum_violation = f"Hyperbolic targets need sum > 2*pi*chi = {expected:.12g}, got {total:.12g}"
    elif bg is BackgroundGeometry.S2 and not total < expected:
        sum_violation = f"Spherical targets need sum < 2*pi*chi = {expected:.12g}, got {total:.12g}"

    ok = sum_violation is None and not violations
    return TargetValidation(ok, total, expected, sum_violation, violations)


def curvature_error(K, target) -> float:
    """Max-norm of Kbar - K (0 for empty input)"""
    diff = np.asarray(target, dtype=float) - np.asarray(K, dtype=float)
    return float(np.max(np.abs(diff))) if diff.size else 0.0


@dataclass
class SurgeryResult:
    mesh: Mesh
    metric: CirclePackingMetric
    flips: int
    capped: bool = False


def _key(i: int, j: int):
    return (i, j) if i < j else (j, i)


def delaunay_surgery(mesh: Mesh, state: ConformalState, metric: CirclePackingMetric,
                     max_flips: Optional[int] = None) -> SurgeryResult:
    """
    Flip interior edges whose opposite angles sum to more than pi.

    Lengths of every other edge are preserved; the new diagonal takes its
    length from the quad's cosine law and its eta from that length.
    Only Euclidean Yamabe metrics are supported.

    Raises:
        FlowConfigError: metric is not E2 Yamabe
    """
    if metric.bg is not BackgroundGeometry.E2 or metric.scheme is not Scheme.YAMABE:
        raise FlowConfigError("Delaunay surgery supports only E2 Yamabe metrics")

    u = state.u
    faces = [list(f) for f in mesh.faces.tolist()]
    lengths = {(int(i), int(j)): float(state.lengths[e]) for e, (i, j) in enumerate(mesh.edges)}
    eta = {(int(i), int(j)): float(metric.eta[e]) for e, (i, j) in enumerate(mesh.edges)}
    cap = mesh.num_edges ** 2 if max_flips is None else max_flips
    flips = 0
    capped = False

    while True:
        edge_faces: Dict[tuple, list] = {}
        for fi, face in enumerate(faces):
            for a in range(3):
                edge_faces.setdefault(_key(face[(a + 1) % 3], face[(a + 2) % 3]), []).append((fi, a))
        fl = np.array([[lengths[_key(f[1], f[2])], lengths[_key(f[2], f[0])], lengths[_key(f[0], f[1])]]
                       for f in faces])
        angles = corner_angles(fl, BackgroundGeometry.E2)

        flipped = False
        for edge, incident in edge_faces.items():
            if len(incident) != 2:
                continue
            (f1, a1), (f2, a2) = incident
            if angles[f1, a1] + angles[f2, a2] <= np.pi + DELAUNAY_TOL:
                continue
            if flips >= cap:
                capped = True
                break
            c, i, j = faces[f1][a1], faces[f1][(a1 + 1) % 3], faces[f1][(a1 + 2) % 3]
            d = faces[f2][a2]
            if _key(c, d) in edge_faces:
                continue
            # quad c, i, d, j in counter-clockwise order
            angle_i = angles[f1, (a1 + 1) % 3] + angles[f2, (a2 + 2) % 3]
            l_ic, l_id = lengths[_key(i, c)], lengths[_key(i, d)]
            l_cd = float(np.sqrt(l_ic ** 2 + l_id ** 2 - 2.0 * l_ic * l_id * np.cos(angle_i)))

            faces[f1] = [c, i, d]
            faces[f2] = [c, d, j]
            del lengths[edge], eta[edge]
            lengths[_key(c, d)] = l_cd
            eta[_key(c, d)] = float(eta_from_length(l_cd, u[c], u[d], metric.epsilon[c], metric.epsilon[d],
                                                    BackgroundGeometry.E2))
            flips += 1
            flipped = True
            logger.debug(f"Flipped edge {edge} -> {_key(c, d)}")
            break
        if capped:
            logger.warning(f"Delaunay surgery stopped at the flip cap ({cap})")
            break
        if not flipped:
            break

    if flips == 0:
        return SurgeryResult(mesh, metric, 0, capped)
    new_mesh = mesh.with_faces(faces)
    new_eta = np.array([eta[(int(i), int(j))] for i, j in new_mesh.edges])
    new_metric = CirclePackingMetric(u.copy(), metric.epsilon.copy(), new_eta, metric.bg, metric.scheme)
    return SurgeryResult(new_mesh, new_metric, flips, capped)


class RicciFlow:
    """Drives the conformal factor of a metric toward a target curvature"""

    def __init__(self, mesh: Mesh, metric: CirclePackingMetric, target, config: Optional[FlowConfig] = None):
        self.mesh = mesh
        self.metric = metric
        self.target = np.asarray(target, dtype=float)
        self.config = config or FlowConfig()

    def _check_preconditions(self):
        validation = validate_target(self.mesh, self.target, self.metric.bg)
        if not validation.ok:
            raise FlowConfigError(f"Invalid target curvature: {validation.sum_violation or validation.bound_violations[:3]}")
        try:
            self.metric.validate(self.mesh)
        except GeometryError as e:
            raise FlowConfigError(f"Invalid initial metric: {e}")
        if self.config.surgery == 'delaunay_e2' and (
                self.metric.bg is not BackgroundGeometry.E2 or self.metric.scheme is not Scheme.YAMABE):
            raise FlowConfigError("delaunay_e2 surgery requires an E2 Yamabe metric")
        if self.metric.bg is BackgroundGeometry.S2:
            logger.warning("Spherical flow is best effort; the spherical energy is not convex")

    def _newton_direction(self, mesh: Mesh, metric: CirclePackingMetric, state: ConformalState,
                          gradient: np.ndarray) -> np.ndarray:
        hessians = face_hessians(mesh, state, metric, route=self.config.hessian_route)
        H = assemble_global(mesh, hessians)
        constraint = 'zero-mean' if metric.bg is BackgroundGeometry.E2 else 'none'
        return solve(LinearSystem(H, gradient, constraint), self.config.solver_tol, self.config.solver_max_iter)

    def run(self) -> FlowResult:
        """
        Iterate until max |Kbar - K| <= threshold or a stop condition.

        Raises:
            FlowConfigError: target or initial metric rejected before the loop
        """
        self._check_preconditions()
        cfg = self.config
        mesh = self.mesh
        metric = self.metric
        bg = metric.bg
        u = metric.u.copy()

        state = conformal_state(mesh, metric, u)
        error = curvature_error(vertex_curvatures(mesh, state.angles), self.target)
        history = [error]
        rows = [{'iteration': 0, 'max_error': error, 'step_used': 0.0, 'flips': 0}]
        status = FlowStatus.CONVERGED
        message = ''
        iteration = 0
        total_flips = 0
        logger.info(f"Flow start: V={mesh.num_vertices} bg={bg.value} scheme={metric.scheme.value} "
                    f"method={cfg.method} error={error:.3e}")

        while error > cfg.threshold:
            if iteration >= cfg.max_iterations:
                status = FlowStatus.MAX_ITER
                message = f"Stopped after {iteration} iterations"
                break
            iteration += 1

            flips = 0
            if cfg.surgery == 'delaunay_e2':
                try:
                    surgery = delaunay_surgery(mesh, state, metric.with_u(u))
                    if surgery.flips:
                        mesh, metric = surgery.mesh, surgery.metric
                        state = conformal_state(mesh, metric, u)
                        flips = surgery.flips
                        total_flips += flips
                except GeometryError as e:
                    status = FlowStatus.DEGENERATE
                    message = f"Surgery failed at iteration {iteration}: {e}"
                    break

            K = vertex_curvatures(mesh, state.angles)
            gradient = self.target - K
            if cfg.method == 'newton':
                try:
                    direction = self._newton_direction(mesh, metric, state, gradient)
                except (SolverError, HessianError) as e:
                    if not cfg.gradient_fallback:
                        status = FlowStatus.SOLVER_FAILURE
                        message = str(e)
                        break
                    logger.warning(f"Iteration {iteration}: Newton solve failed ({e}), taking a gradient step")
                    direction = gradient
            else:
                direction = gradient

            step = cfg.step_length
            halvings = 0
            new_state = None
            while True:
                candidate = u + step * direction
                if bg is BackgroundGeometry.E2:
                    candidate = candidate - candidate.mean()
                try:
                    trial = conformal_state(mesh, metric, candidate)
                    trial_error = curvature_error(vertex_curvatures(mesh, trial.angles), self.target)
                except GeometryError as e:
                    if cfg.backtracking and halvings < cfg.max_halvings:
                        halvings += 1
                        step *= 0.5
                        continue
                    message = f"Degenerate metric at iteration {iteration}: {e}"
                    break
                if cfg.backtracking and trial_error > error and halvings < cfg.max_halvings:
                    halvings += 1
                    step *= 0.5
                    continue
                if trial_error > error:
                    logger.warning(f"Iteration {iteration}: error increased to {trial_error:.3e} at step {step:.3e}")
                new_state = trial
                break

            if new_state is None:
                status = FlowStatus.DEGENERATE
                break
            if halvings:
                logger.warning(f"Iteration {iteration}: step halved {halvings} time(s) to {step:.3e}")

            u = candidate
            state = new_state
            error = trial_error
            history.append(error)
            rows.append({'iteration': iteration, 'max_error': error, 'step_used': step, 'flips': flips})
            logger.info(f"Iteration {iteration}: max error {error:.3e} step {step:.3e}")

        final_metric = metric.with_u(u)
        # certify from a fresh evaluation of u
        if status is FlowStatus.CONVERGED:
            fresh = conformal_state(mesh, final_metric)
            fresh_error = curvature_error(vertex_curvatures(mesh, fresh.angles), self.target)
            if fresh_error > cfg.threshold:
                status = FlowStatus.MAX_ITER
                message = f"Recomputed error {fresh_error:.3e} exceeds the threshold"
            state = fresh

        if cfg.log_path:
            write_iteration_log(cfg.log_path, rows)
        logger.info(f"Flow finished: status={status.value} iterations={iteration} error={history[-1]:.3e}")

        return FlowResult(
            u_final=u,
            metric_final=final_metric,
            lengths=state.lengths,
            mesh=mesh,
            iterations=iteration,
            error_history=history,
            status=status,
            flips=total_flips,
            message=message,
        )


def run(mesh: Mesh, metric0: CirclePackingMetric, target, cfg: Optional[FlowConfig] = None) -> FlowResult:
    return RicciFlow(mesh, metric0, target, cfg).run()
