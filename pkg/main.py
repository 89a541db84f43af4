#!/usr/bin/env python3
"""Batch command line for the unified discrete surface Ricci flow"""
import os
import sys
import argparse
import logging
from pathlib import Path


def _apply_thread_cap():
    """RICCI_THREADS caps BLAS/OpenMP workers; must run before numpy loads"""
    threads = os.environ.get('RICCI_THREADS')
    if threads:
        for var in ('OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS'):
            os.environ[var] = threads


_apply_thread_cap()

import numpy as np  # noqa: E402

from src.artifacts import dumps, load_target, write_json  # noqa: E402
from src.config_loader import ConfigError, default_config, load_config  # noqa: E402
from src.fd_oracle import OracleError, check_mesh_faces  # noqa: E402
from src.halfedge_mesh import Mesh, MeshError, load_obj, save_obj, topology  # noqa: E402
from src.hessian_assembly import HessianError, assemble_global, dump_matrix_market, face_hessians  # noqa: E402
from src.layout import LayoutError, angle_log_ratios, angle_ratio_histogram, embed_disk  # noqa: E402
from src.metric_geometry import (  # noqa: E402
    BackgroundGeometry,
    GeometryError,
    Scheme,
    conformal_state,
    gauss_bonnet_residual,
    init_circle_packing,
    length_reproduction_error,
    metric_to_dict,
    vertex_curvatures,
)
from src.ricci_flow import FlowConfig, FlowConfigError, run, validate_target  # noqa: E402

DEFAULT_CONFIG_PATH = 'config/config.yaml'

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NOT_CONVERGED = 2

logger = logging.getLogger(__name__)


def setup_logging(config: dict):
    """Setup logging configuration; logs go to stderr and optionally a file"""
    log_config = config.get('logging', {})
    log_file = log_config.get('file') or ''
    log_level = str(log_config.get('level', 'INFO')).upper()

    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))

    logging.basicConfig(
        level=getattr(logging, log_level),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers
    )


def resolve_config(path: str) -> dict:
    """Explicit paths must exist; the default path falls back to built-in defaults"""
    if path == DEFAULT_CONFIG_PATH and not Path(path).exists():
        return default_config()
    return load_config(path)


def build_target(mesh: Mesh, K: np.ndarray, spec: str, bg: BackgroundGeometry) -> np.ndarray:
    """
    Target curvature from a CLI specifier.

    uniform: 2 pi chi / V at every vertex.
    zero-interior: 0 at interior vertices; in E2 the boundary shares
    2 pi chi in proportion to its current curvature (evenly if that sums
    to zero), in H2 and S2 it keeps its current curvature.
    Anything else is read as a JSON array file.
    """
    chi = topology(mesh).euler_characteristic
    total = 2.0 * np.pi * chi
    if spec == 'uniform':
        return np.full(mesh.num_vertices, total / mesh.num_vertices)
    if spec == 'zero-interior':
        target = np.zeros(mesh.num_vertices)
        boundary = mesh.is_boundary_vertex
        if not boundary.any():
            return target
        if bg is not BackgroundGeometry.E2:
            target[boundary] = K[boundary]
            return target
        current = K[boundary]
        if abs(current.sum()) > 1e-12:
            target[boundary] = current * (total / current.sum())
        else:
            target[boundary] = total / boundary.sum()
        return target
    return load_target(spec)


def _emit(report: dict):
    sys.stdout.write(dumps(report) + "\n")


def cmd_flow(args, config: dict) -> int:
    """Load, initialize, flow and write the metric, report and layout"""
    mesh = load_obj(args.input)
    bg = BackgroundGeometry.parse(args.geometry)
    scheme = Scheme.parse(args.scheme)
    embedded = mesh.embedded_edge_lengths()
    metric = init_circle_packing(mesh, embedded, scheme, bg)
    initial = conformal_state(mesh, metric)
    K0 = vertex_curvatures(mesh, initial.angles)

    target = build_target(mesh, K0, args.target, bg)
    validation = validate_target(mesh, target, bg, config['audit']['gauss_bonnet_tol'])
    if not validation.ok:
        _emit({'status': 'invalid_target', 'validation': validation.to_dict()})
        print(f"Target rejected: {validation.sum_violation or 'per-vertex bound violated'}", file=sys.stderr)
        return EXIT_INPUT_ERROR

    flow_config = FlowConfig.from_config(
        config,
        step_length=args.step,
        threshold=args.threshold,
        max_iterations=args.max_iter,
        method=args.method,
        surgery='delaunay_e2' if args.surgery else None,
        log_path=args.log,
    )
    result = run(mesh, metric, target, flow_config)

    final = conformal_state(result.mesh, result.metric_final)
    K = vertex_curvatures(result.mesh, final.angles)
    residual = gauss_bonnet_residual(result.mesh, K, final.total_area, bg)
    top = topology(result.mesh)

    prefix = args.output
    write_json(f"{prefix}.metric.json", metric_to_dict(result.mesh, result.metric_final))

    report = {
        'input': str(args.input),
        'geometry': bg.value,
        'scheme': scheme.value,
        'topology': top.to_dict(),
        'flow': result.to_dict(),
        'config': {
            'step_length': flow_config.step_length,
            'threshold': flow_config.threshold,
            'max_iterations': flow_config.max_iterations,
            'method': flow_config.method,
            'surgery': flow_config.surgery,
        },
        'initial_length_error': length_reproduction_error(initial.lengths, embedded),
        'gauss_bonnet_residual': residual,
        'validation': validation.to_dict(),
    }

    is_disk = top.euler_characteristic == 1 and top.num_boundary_loops == 1
    if bg is BackgroundGeometry.E2 and is_disk:
        interior = ~result.mesh.is_boundary_vertex
        k_max = float(np.max(np.abs(K[interior]))) if interior.any() else 0.0
        try:
            embedding = embed_disk(result.mesh, final.lengths, k_max, config['audit']['flat_tol'])
        except LayoutError as e:
            logger.warning(f"Layout skipped: {e}")
            report['layout'] = {'error': str(e)}
        else:
            save_obj(result.mesh, f"{prefix}.obj", uv=embedding.uv)
            planar = Mesh(np.column_stack([embedding.uv, np.zeros(mesh.num_vertices)]), result.mesh.faces)
            ratios = angle_log_ratios(result.mesh.corner_angles_from_positions(), planar.corner_angles_from_positions())
            report['layout'] = embedding.to_dict()
            report['conformality'] = angle_ratio_histogram(ratios, config['audit'].get('histogram_bins', 20))

    write_json(f"{prefix}.report.json", report)
    _emit(report)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_check(args, config: dict) -> int:
    """Topology, Gauss-Bonnet and oracle audits of the initial metric"""
    mesh = load_obj(args.input)
    bg = BackgroundGeometry.parse(args.geometry)
    scheme = Scheme.parse(args.scheme)
    metric = init_circle_packing(mesh, mesh.embedded_edge_lengths(), scheme, bg)
    if args.perturb:
        rng = np.random.default_rng(config['oracle'].get('seed', 0))
        metric = metric.with_u(metric.u + rng.uniform(-args.perturb, args.perturb, size=mesh.num_vertices))

    state = conformal_state(mesh, metric)
    K = vertex_curvatures(mesh, state.angles)
    residual = gauss_bonnet_residual(mesh, K, state.total_area, bg)
    gb_ok = abs(residual) <= config['audit']['gauss_bonnet_tol']

    oracle = check_mesh_faces(mesh, metric, config['oracle']['samples'], config['oracle'].get('seed', 0),
                              config['oracle']['step'])
    oracle_ok = oracle.max_rel_error <= config['oracle']['rel_tol']

    if args.dump_hessian:
        dump_matrix_market(assemble_global(mesh, face_hessians(mesh, state, metric)), args.dump_hessian)

    report = {
        'input': str(args.input),
        'geometry': bg.value,
        'scheme': scheme.value,
        'topology': topology(mesh).to_dict(),
        'gauss_bonnet': {'residual': residual, 'ok': gb_ok},
        'oracle': dict(oracle.to_dict(), ok=oracle_ok),
    }
    _emit(report)
    if not (gb_ok and oracle_ok):
        print("Audit failed", file=sys.stderr)
        return EXIT_INPUT_ERROR
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Unified discrete surface Ricci flow')
    sub = parser.add_subparsers(dest='command', required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--input', required=True, help='Triangle mesh (OBJ)')
    common.add_argument('--geometry', default='e2', choices=['e2', 'h2', 's2'], help='Background geometry')
    common.add_argument('--scheme', default='yamabe', choices=[s.value for s in Scheme], help='Circle packing scheme')
    common.add_argument('--config', default=DEFAULT_CONFIG_PATH, help='Config file path')

    flow = sub.add_parser('flow', parents=[common], help='Run the flow and write results')
    flow.add_argument('--target', default='uniform', help='uniform | zero-interior | path to a JSON array')
    flow.add_argument('--step', type=float, default=None, help='Step length (default 0.5)')
    flow.add_argument('--threshold', type=float, default=None, help='Max curvature error (default 1e-6)')
    flow.add_argument('--max-iter', type=int, default=None, help='Iteration cap (default 200)')
    flow.add_argument('--method', choices=['newton', 'gradient'], default=None, help='Update method')
    flow.add_argument('--surgery', action='store_true', help='Delaunay edge flips (E2 Yamabe)')
    flow.add_argument('--output', default='out/result', help='Output path prefix')
    flow.add_argument('--log', default=None, help='Iteration log CSV path')

    check = sub.add_parser('check', parents=[common], help='Audit the initial metric')
    check.add_argument('--perturb', type=float, default=0.0, help='Random perturbation of u before auditing')
    check.add_argument('--dump-hessian', default=None, help='Write the global Hessian in Matrix Market format')
    return parser


def main(argv=None):
    """Main entry point"""
    args = build_parser().parse_args(argv)

    # Load config
    try:
        config = resolve_config(args.config)
    except ConfigError as e:
        print(f"Config error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR

    # Setup logging
    setup_logging(config)

    handler = cmd_flow if args.command == 'flow' else cmd_check
    try:
        return handler(args, config)
    except (MeshError, GeometryError, HessianError, OracleError, FlowConfigError, ValueError) as e:
        print(f"Input error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == '__main__':
    sys.exit(main())
