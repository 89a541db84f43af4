import pytest
import numpy as np
from src.halfedge_mesh import Mesh
from src.layout import (
    NotADisk, NotFlat, PlacementAmbiguity, angle_log_ratios, angle_ratio_histogram, embed_disk,
    isometry_deviation, signed_areas,
)
from src.mesh_generators import grid_disk, single_triangle, tetrahedron
from src.metric_geometry import BackgroundGeometry, Scheme, conformal_state, init_circle_packing, vertex_curvatures
from src.ricci_flow import FlowConfig, run


def test_single_triangle_layout():
    """Canonical placement of the 3-4-5 triangle"""
    tri = single_triangle()
    embedding = embed_disk(tri, tri.embedded_edge_lengths(), 0.0)
    uv = embedding.uv
    assert np.allclose(uv[0], [0.0, 0.0])
    assert uv[1, 1] == 0.0
    assert uv[1, 0] == pytest.approx(4.0)
    assert uv[2, 1] > 0
    assert embedding.max_relative_deviation <= 1e-12
    assert embedding.min_signed_area == pytest.approx(6.0)


def test_flat_grid_layout_is_isometric():
    """Unfolding reproduces every edge length of a planar grid"""
    grid = grid_disk(8, jitter=0.2, seed=5)
    lengths = grid.embedded_edge_lengths()
    embedding = embed_disk(grid, lengths, 0.0)
    assert embedding.max_relative_deviation <= 1e-10
    assert embedding.min_signed_area > 0
    assert isometry_deviation(grid, embedding.uv, lengths) == embedding.max_relative_deviation
    assert embedding.to_dict()['min_signed_area'] == embedding.min_signed_area


def test_layout_rejects_closed_surface():
    """A tetrahedron is not a disk"""
    tet = tetrahedron()
    with pytest.raises(NotADisk):
        embed_disk(tet, tet.embedded_edge_lengths(), 0.0)


def test_layout_rejects_curved_interior():
    """Interior curvature above the tolerance"""
    grid = grid_disk(4)
    with pytest.raises(NotFlat):
        embed_disk(grid, grid.embedded_edge_lengths(), 1e-3)


def test_degenerate_placement():
    """Collinear corners cannot be placed"""
    tri = single_triangle()
    with pytest.raises(PlacementAmbiguity):
        embed_disk(tri, np.array([1.0, 1.0, 2.0]), 0.0)


def test_signed_areas_orientation():
    """Counter-clockwise faces are positive"""
    tri = single_triangle()
    uv = tri.positions[:, :2]
    assert signed_areas(tri, uv)[0] == pytest.approx(6.0)
    assert signed_areas(tri, uv[:, ::-1])[0] == pytest.approx(-6.0)


def test_flattened_bumpy_disk_lays_out():
    """Converged flat metric embeds to 1e-6 and stays conformal to the input"""
    grid = grid_disk(9, bump=0.2, seed=1)
    metric = init_circle_packing(grid, grid.embedded_edge_lengths(), Scheme.YAMABE, BackgroundGeometry.E2)
    K0 = vertex_curvatures(grid, conformal_state(grid, metric).angles)
    boundary = grid.is_boundary_vertex
    target = np.zeros(grid.num_vertices)
    target[boundary] = K0[boundary] * 2 * np.pi / K0[boundary].sum()
    result = run(grid, metric, target, FlowConfig(threshold=1e-9))
    assert result.converged

    state = conformal_state(grid, result.metric_final)
    K = vertex_curvatures(grid, state.angles)
    embedding = embed_disk(grid, state.lengths, np.max(np.abs(K[~boundary])))
    assert embedding.max_relative_deviation <= 1e-6
    assert embedding.min_signed_area > 0

    planar = Mesh(np.column_stack([embedding.uv, np.zeros(grid.num_vertices)]), grid.faces)
    ratios = angle_log_ratios(grid.corner_angles_from_positions(), planar.corner_angles_from_positions())
    assert ratios.shape == (3 * grid.num_faces,)
    assert np.all(np.isfinite(ratios))


def test_flat_grid_flow_is_conformal():
    """A flat 33x33 grid flows in place; angles are unchanged"""
    grid = grid_disk(33)
    metric = init_circle_packing(grid, grid.embedded_edge_lengths(), Scheme.YAMABE, BackgroundGeometry.E2)
    K0 = vertex_curvatures(grid, conformal_state(grid, metric).angles)
    boundary = grid.is_boundary_vertex
    target = np.zeros(grid.num_vertices)
    target[boundary] = K0[boundary] * 2 * np.pi / K0[boundary].sum()
    result = run(grid, metric, target)
    assert result.converged

    state = conformal_state(grid, result.metric_final)
    embedding = embed_disk(grid, state.lengths, 0.0)
    planar = Mesh(np.column_stack([embedding.uv, np.zeros(grid.num_vertices)]), grid.faces)
    ratios = angle_log_ratios(grid.corner_angles_from_positions(), planar.corner_angles_from_positions())
    assert np.max(np.abs(ratios)) <= 1e-5


def test_angle_ratio_histogram():
    """Counts cover every value; empty input is allowed"""
    values = np.array([-0.1, 0.0, 0.05, 0.1])
    hist = angle_ratio_histogram(values, bins=4)
    assert sum(hist['counts']) == 4
    assert len(hist['edges']) == 5
    assert hist['max_abs'] == pytest.approx(0.1)
    assert angle_ratio_histogram(np.array([]))['counts'] == []


def test_angle_log_ratios_identity():
    """Unchanged angles give zero ratios"""
    angles = single_triangle().corner_angles_from_positions()
    assert np.allclose(angle_log_ratios(angles, angles), 0.0)
