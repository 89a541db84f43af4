import pytest
import tempfile
import numpy as np
from pathlib import Path
from scipy import io as sio
from src.fd_oracle import fd_face_hessian, local_lengths
from src.hessian_assembly import (
    PowerCircleUndefined, assemble_global, dump_matrix_market, euclidean_power_circle,
    face_hessian_analytic, face_hessian_geometric_e2, face_hessian_geometric_h2,
    face_hessian_geometric_s2, face_hessians, length_derivative_splits,
)
from src.mesh_generators import grid_disk, single_triangle, tetrahedron, torus
from src.metric_geometry import (
    BackgroundGeometry, Scheme, conformal_state, corner_angles, init_circle_packing, u_from_gamma,
    vertex_curvatures,
)

E2, H2, S2 = BackgroundGeometry.E2, BackgroundGeometry.H2, BackgroundGeometry.S2


def test_equilateral_yamabe_entries():
    """Off-diagonals 1/(2 sqrt 3), diagonals -1/sqrt 3"""
    l = np.ones(3)
    theta = corner_angles(l, E2)
    H = face_hessian_analytic(l, theta, np.ones(3), np.zeros(3), E2).H
    off = H[~np.eye(3, dtype=bool)]
    assert np.allclose(off, 1.0 / (2.0 * np.sqrt(3.0)))
    assert np.allclose(np.diag(H), -1.0 / np.sqrt(3.0))


def test_right_triangle_yamabe_cotangent_weights():
    """3-4-5 Yamabe face: off-diagonals are half cotangents of the opposite corner"""
    l = np.array([3.0, 4.0, 5.0])
    H = face_hessian_analytic(l, corner_angles(l, E2), np.ones(3), np.zeros(3), E2).H
    expected = np.array([
        [-0.375, 0.0, 0.375],
        [0.0, -2.0 / 3.0, 2.0 / 3.0],
        [0.375, 2.0 / 3.0, -0.375 - 2.0 / 3.0],
    ])
    assert np.allclose(H, expected, atol=1e-12)
    fd = fd_face_hessian(np.zeros(3), l ** 2 / 2.0, np.zeros(3), E2)
    assert np.allclose(fd, expected, atol=1e-7)


@pytest.mark.parametrize("eps", [(1, 1, 1), (0, 0, 0), (-1, -1, -1), (1, 0, -1)])
def test_euclidean_rows_sum_to_zero(eps):
    """Euclidean angle sums are invariant under a common shift of u"""
    rng = np.random.default_rng(0)
    for _ in range(50):
        l = rng.uniform(0.8, 1.2, size=3)
        gamma = rng.uniform(0.1, 0.3, size=3)
        H = face_hessian_analytic(l, corner_angles(l, E2), gamma, np.array(eps), E2).H
        assert np.allclose(H.sum(axis=1), 0.0, atol=1e-12)
        assert np.max(np.abs(H - H.T)) < 1e-12


def test_power_circle_is_circumcircle_for_yamabe():
    """Zero radii: the power circle is the circumcircle"""
    pc = euclidean_power_circle(np.array([5.0, 3.0, 4.0]), np.ones(3), np.zeros(3))
    assert pc.radius_sq == pytest.approx(6.25)
    assert np.allclose(pc.center, [2.0, 1.5])
    assert pc.h[0] == pytest.approx(0.0, abs=1e-12)


def test_power_circle_tangential_equilateral():
    """Unit circles at the corners of an equilateral triangle of side 2"""
    pc = euclidean_power_circle(np.full(3, 2.0), np.ones(3), np.ones(3))
    assert pc.radius_sq == pytest.approx(1.0 / 3.0)
    assert np.allclose(pc.h, 1.0 / np.sqrt(3.0))
    assert np.allclose(pc.center, [1.0, 1.0 / np.sqrt(3.0)])


def test_power_circle_orthogonal_to_inversive_circles():
    """|center - p_i|^2 = radius^2 + gamma_i^2"""
    l = np.array([1.0, 1.1, 0.9])
    gamma = np.array([0.3, 0.25, 0.35])
    pc = euclidean_power_circle(l, gamma, np.ones(3))
    dist_sq = np.sum((pc.corners - pc.center) ** 2, axis=1)
    assert np.allclose(dist_sq, pc.radius_sq + gamma ** 2)


def test_right_triangle_hypotenuse_entry_vanishes():
    """Yamabe circumcenter on the hypotenuse"""
    l = np.array([5.0, 3.0, 4.0])
    pc = euclidean_power_circle(l, np.ones(3), np.zeros(3))
    H = face_hessian_geometric_e2(pc, l).H
    assert H[1, 2] == pytest.approx(0.0, abs=1e-12)
    assert H[0, 1] > 0 and H[0, 2] > 0


def test_obtuse_face_has_negative_entry():
    """Circumcenter outside an obtuse face"""
    l = np.array([1.0, 1.0, 1.9])
    pc = euclidean_power_circle(l, np.ones(3), np.zeros(3))
    H = face_hessian_geometric_e2(pc, l).H
    assert H[0, 1] < 0


def test_geometric_e2_matches_analytic():
    """Power circle route against the analytic route on an inversive face"""
    l = np.array([1.0, 1.1, 0.9])
    gamma = np.array([0.3, 0.25, 0.35])
    eps = np.ones(3)
    geometric = face_hessian_geometric_e2(euclidean_power_circle(l, gamma, eps), l).H
    analytic = face_hessian_analytic(l, corner_angles(l, E2), gamma, eps, E2).H
    assert np.allclose(geometric, analytic, atol=1e-12)


def test_length_splits_tangential_and_yamabe():
    """Tangential splits are the radii; equal Yamabe factors split at the midpoint"""
    gamma = np.array([0.5, 0.7, 0.9])
    l = np.array([gamma[1] + gamma[2], gamma[0] + gamma[2], gamma[0] + gamma[1]])
    d = length_derivative_splits(euclidean_power_circle(l, gamma, np.ones(3)))
    for b in range(3):
        for c in range(3):
            if b != c:
                assert d[b, c] == pytest.approx(gamma[b])

    l = np.array([1.0, 1.2, 0.8])
    d = length_derivative_splits(euclidean_power_circle(l, np.ones(3), np.zeros(3)))
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        assert d[b, c] == pytest.approx(l[a] / 2)
        assert d[c, b] == pytest.approx(l[a] / 2)


def test_symmetric_hyperbolic_face_has_equal_off_diagonals():
    """All-equal lengths and radii"""
    l = np.full(3, 1.0)
    H = face_hessian_geometric_h2(l, np.full(3, 0.3), np.ones(3)).H
    off = H[~np.eye(3, dtype=bool)]
    assert np.allclose(off, off[0])
    assert off[0] > 0


@pytest.mark.parametrize("bg,geometric", [(H2, face_hessian_geometric_h2), (S2, face_hessian_geometric_s2)])
def test_curved_closed_forms_match_finite_differences(bg, geometric):
    """Closed-form off-diagonals against central differences on one face"""
    gamma = np.array([0.3, 0.35, 0.4])
    eta = np.array([1.5, 1.2, 1.8])
    eps = np.ones(3)
    u = u_from_gamma(gamma, bg)
    l = local_lengths(u, eta, eps, bg)
    H = geometric(l, gamma, eps).H
    assert np.allclose(H, fd_face_hessian(u, eta, eps, bg), atol=1e-6)


def test_degenerate_spherical_face():
    """Collinear spherical face has no power circle"""
    with pytest.raises(PowerCircleUndefined):
        face_hessian_geometric_s2(np.array([1.0, 1.0, 2.0]), np.full(3, 0.2), np.ones(3))


def _numeric_curvature_jacobian(mesh, metric, h=1e-6):
    n = mesh.num_vertices
    J = np.empty((n, n))
    for v in range(n):
        up = metric.u.copy()
        down = metric.u.copy()
        up[v] += h
        down[v] -= h
        K_up = vertex_curvatures(mesh, conformal_state(mesh, metric, up).angles)
        K_down = vertex_curvatures(mesh, conformal_state(mesh, metric, down).angles)
        J[:, v] = (K_up - K_down) / (2 * h)
    return J


@pytest.mark.parametrize("bg", [E2, H2, S2])
def test_global_matrix_matches_curvature_jacobian(bg):
    """Assembled dK/du on a perturbed tetrahedron"""
    tet = tetrahedron()
    metric = init_circle_packing(tet, tet.embedded_edge_lengths(), Scheme.INVERSIVE, bg)
    metric = metric.with_u(metric.u + np.array([0.02, -0.01, 0.03, 0.0]))
    state = conformal_state(tet, metric)
    M = assemble_global(tet, face_hessians(tet, state, metric)).toarray()
    assert np.allclose(M, M.T, atol=1e-12)
    assert np.allclose(M, _numeric_curvature_jacobian(tet, metric), atol=1e-6)


def test_global_matrix_is_laplacian_like_in_e2():
    """Rows sum to zero; single triangle gives minus the face Hessian"""
    tri = single_triangle()
    metric = init_circle_packing(tri, tri.embedded_edge_lengths(), Scheme.YAMABE, E2)
    state = conformal_state(tri, metric)
    hessians = face_hessians(tri, state, metric)
    M = assemble_global(tri, hessians).toarray()
    assert np.allclose(M, -hessians[0], atol=1e-12)
    assert np.allclose(M.sum(axis=1), 0.0, atol=1e-12)


def test_sparsity_pattern_follows_edges():
    """Stored entries are the diagonal plus both directions of every edge"""
    mesh = grid_disk(5)
    metric = init_circle_packing(mesh, mesh.embedded_edge_lengths(), Scheme.YAMABE, E2)
    M = assemble_global(mesh, face_hessians(mesh, conformal_state(mesh, metric), metric)).tocoo()
    pattern = set(zip(M.row.tolist(), M.col.tolist()))
    expected = {(v, v) for v in range(mesh.num_vertices)}
    for i, j in mesh.edges.tolist():
        expected.add((i, j))
        expected.add((j, i))
    assert pattern == expected


def test_delaunay_flat_grid_is_m_matrix():
    """Non-positive off-diagonals and weakly dominant diagonal"""
    mesh = grid_disk(6)
    metric = init_circle_packing(mesh, mesh.embedded_edge_lengths(), Scheme.YAMABE, E2)
    M = assemble_global(mesh, face_hessians(mesh, conformal_state(mesh, metric), metric)).toarray()
    off = M - np.diag(np.diag(M))
    assert off.max() <= 1e-12
    assert np.all(np.diag(M) >= -off.sum(axis=1) - 1e-12)


@pytest.mark.parametrize("bg", [E2, H2, S2])
def test_geometric_route_matches_analytic_on_mesh(bg):
    """Both face Hessian routes agree on a torus"""
    mesh = torus(8, 6)
    lengths = mesh.embedded_edge_lengths()
    lengths = 0.5 * lengths / lengths.max()
    metric = init_circle_packing(mesh, lengths, Scheme.INVERSIVE, bg)
    state = conformal_state(mesh, metric)
    analytic = face_hessians(mesh, state, metric, 'analytic')
    geometric = face_hessians(mesh, state, metric, 'geometric')
    assert np.allclose(geometric, analytic, atol=1e-8)


def test_unknown_route():
    """Only analytic and geometric routes exist"""
    tet = tetrahedron()
    metric = init_circle_packing(tet, tet.embedded_edge_lengths(), Scheme.YAMABE, E2)
    with pytest.raises(ValueError):
        face_hessians(tet, conformal_state(tet, metric), metric, 'spectral')


def test_dump_matrix_market():
    """Round trip through scipy's Matrix Market reader"""
    tet = tetrahedron()
    metric = init_circle_packing(tet, tet.embedded_edge_lengths(), Scheme.YAMABE, E2)
    M = assemble_global(tet, face_hessians(tet, conformal_state(tet, metric), metric))
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "hessian" / "tet.mtx"
        dump_matrix_market(M, str(path))
        loaded = sio.mmread(str(path))
        assert np.allclose(loaded.toarray(), M.toarray())
