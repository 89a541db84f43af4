import pytest
import numpy as np
from src.halfedge_mesh import topology
from src.mesh_generators import genus_two, grid_disk, single_triangle, tetrahedron, torus
from src.metric_geometry import (
    BackgroundGeometry, CirclePackingMetric, DegenerateLength, DomainError, GeometryError,
    InitializationInfeasible, InvalidMetric, InverseUndefined, Scheme, TriangleInequalityViolation,
    conformal_state, corner_angles, edge_length, eta_from_lambda, face_areas, gamma_from_u,
    gauss_bonnet_residual, init_circle_packing, lambda_from_eta, metric_from_dict, metric_to_dict,
    radius_terms, radius_terms_from_gamma, u_from_gamma, vertex_curvatures,
)

E2, H2, S2 = BackgroundGeometry.E2, BackgroundGeometry.H2, BackgroundGeometry.S2


def test_parse_geometry_and_scheme():
    """Case-insensitive parsing; unknown names raise"""
    assert BackgroundGeometry.parse('h2') is H2
    assert Scheme.parse('YAMABE') is Scheme.YAMABE
    assert Scheme.MIXED.epsilon is None
    assert Scheme.VIRTUAL.epsilon == -1
    with pytest.raises(GeometryError):
        BackgroundGeometry.parse('k3')
    with pytest.raises(GeometryError):
        Scheme.parse('apollonian')


def test_u_from_gamma_examples():
    """Known conformal factors"""
    assert u_from_gamma(1.0, E2) == pytest.approx(0.0)
    assert u_from_gamma(np.pi / 2, S2) == pytest.approx(0.0, abs=1e-15)
    assert u_from_gamma(1.0, H2) == pytest.approx(np.log(np.tanh(0.5)), rel=1e-14)
    assert u_from_gamma(1.0, H2) == pytest.approx(-0.7719368, rel=1e-6)


def test_u_from_gamma_domain_errors():
    """Radii must be positive; spherical radii below pi"""
    with pytest.raises(DomainError):
        u_from_gamma(0.0, E2)
    with pytest.raises(DomainError):
        u_from_gamma(-1.0, H2)
    with pytest.raises(DomainError):
        u_from_gamma(np.pi, S2)


@pytest.mark.parametrize("bg,hi", [(E2, 5.0), (H2, 5.0), (S2, 3.0)])
def test_gamma_u_round_trip(bg, hi):
    """gamma -> u -> gamma is the identity on the domain"""
    gamma = np.random.default_rng(1).uniform(0.05, hi, size=500)
    assert np.allclose(gamma_from_u(u_from_gamma(gamma, bg), bg), gamma, rtol=1e-10)


def test_hyperbolic_gamma_undefined_for_nonnegative_u():
    """u >= 0 has no hyperbolic radius"""
    with pytest.raises(DomainError):
        gamma_from_u(np.array([-1.0, 0.0]), H2)
    out = gamma_from_u(np.array([-1.0, 0.5]), H2, strict=False)
    assert np.isfinite(out[0])
    assert np.isnan(out[1])


@pytest.mark.parametrize("bg", [E2, H2, S2])
def test_radius_terms_agree_with_radii(bg):
    """radius_terms(u) equals the radius form wherever gamma exists"""
    rng = np.random.default_rng(2)
    gamma = rng.uniform(0.2, 1.2, size=300)
    eps = rng.integers(-1, 2, size=300)
    from_u = radius_terms(u_from_gamma(gamma, bg), eps, bg)
    assert np.allclose(from_u, radius_terms_from_gamma(gamma, eps, bg), rtol=1e-10)


def test_edge_length_examples():
    """Hand-computed lengths"""
    # tangential circles of radius 1 touch
    assert edge_length(0.0, 0.0, 1.0, 1, 1, E2) == pytest.approx(2.0)
    # Yamabe with eta = L^2 / 2 reproduces L at u = 0
    assert edge_length(0.0, 0.0, 4.5, 0, 0, E2) == pytest.approx(3.0)
    # hyperbolic inversive distance
    g = 0.5
    u = u_from_gamma(g, H2)
    expected = np.arccosh(2.0 * np.sinh(g) ** 2 + np.cosh(g) ** 2)
    assert edge_length(u, u, 2.0, 1, 1, H2) == pytest.approx(expected, rel=1e-12)


def test_edge_length_degenerate():
    """Virtual E2 edge with eta = 0 has a negative radicand"""
    with pytest.raises(DegenerateLength):
        edge_length(0.0, 0.0, 0.0, -1, -1, E2)


def test_euclidean_scheme_consistency():
    """Inversive, Yamabe and virtual E2 lengths follow their defining laws"""
    rng = np.random.default_rng(3)
    gi, gj = rng.uniform(0.5, 1.5, size=(2, 1000))
    eta = rng.uniform(1.0, 4.0, size=1000)
    ui, uj = np.log(gi), np.log(gj)

    l = edge_length(ui, uj, eta, 1, 1, E2)
    assert np.allclose(l ** 2, gi ** 2 + gj ** 2 + 2 * eta * gi * gj, rtol=1e-12)

    l = edge_length(ui, uj, eta, 0, 0, E2)
    assert np.allclose(l ** 2, 2 * eta * gi * gj, rtol=1e-12)

    expected = 2 * eta * gi * gj - gi ** 2 - gj ** 2
    ok = expected > 0.05
    l = edge_length(ui[ok], uj[ok], eta[ok], -1, -1, E2)
    assert np.allclose(l ** 2, expected[ok], rtol=1e-10)


def test_hyperbolic_scheme_consistency():
    """Inversive cosine law, Yamabe sinh law and virtual law in H2"""
    rng = np.random.default_rng(4)
    gi, gj = rng.uniform(0.2, 2.0, size=(2, 1000))
    eta = rng.uniform(0.5, 3.0, size=1000)
    l = edge_length(u_from_gamma(gi, H2), u_from_gamma(gj, H2), eta, 1, 1, H2)
    expected = eta * np.sinh(gi) * np.sinh(gj) + np.cosh(gi) * np.cosh(gj)
    assert np.allclose(np.cosh(l), expected, rtol=1e-12)

    L = rng.uniform(0.5, 3.0, size=1000)
    ui, uj = rng.uniform(-1.0, 0.5, size=(2, 1000))
    l = edge_length(ui, uj, np.sinh(L / 2) ** 2 / 2, 0, 0, H2)
    assert np.allclose(np.sinh(l / 2), np.sinh(L / 2) * np.exp((ui + uj) / 2), rtol=1e-12)

    ri, rj = rng.uniform(0.5, 1.5, size=(2, 1000))
    eta = rng.uniform(2.0, 5.0, size=1000)
    ui, uj = np.log(np.tanh(ri / 2)), np.log(np.tanh(rj / 2))
    l = edge_length(ui, uj, eta, -1, -1, H2)
    expected = (eta * np.sinh(ri) * np.sinh(rj) + 1) / (np.cosh(ri) * np.cosh(rj))
    assert np.allclose(np.cosh(l), expected, rtol=1e-12)


def test_spherical_inversive_consistency():
    """cos l = cos gi cos gj - eta sin gi sin gj"""
    rng = np.random.default_rng(5)
    gi, gj = rng.uniform(0.2, 1.0, size=(2, 1000))
    eta = rng.uniform(0.5, 1.5, size=1000)
    l = edge_length(u_from_gamma(gi, S2), u_from_gamma(gj, S2), eta, 1, 1, S2)
    expected = np.cos(gi) * np.cos(gj) - eta * np.sin(gi) * np.sin(gj)
    assert np.allclose(np.cos(l), expected, atol=1e-12)


def test_corner_angles_euclidean():
    """Equilateral and 3-4-5 triangles"""
    assert np.allclose(corner_angles([1.0, 1.0, 1.0], E2), np.pi / 3)
    angles = corner_angles(np.array([5.0, 3.0, 4.0]), E2)
    assert angles[0] == pytest.approx(np.pi / 2, abs=1e-12)
    assert angles.sum() == pytest.approx(np.pi)


def test_corner_angles_curved():
    """Hyperbolic sums fall below pi, spherical sums exceed it"""
    theta = corner_angles([1.0, 1.0, 1.0], H2)
    c = np.cosh(1.0)
    assert theta[0] == pytest.approx(np.arccos(c * (c - 1) / np.sinh(1.0) ** 2), rel=1e-12)
    assert theta.sum() < np.pi
    assert corner_angles([1.0, 1.0, 1.0], S2).sum() > np.pi


@pytest.mark.parametrize("bg", [E2, H2, S2])
def test_corner_angles_permutation(bg):
    """Permuting lengths permutes angles"""
    l = np.array([0.7, 0.9, 1.1])
    perm = [2, 0, 1]
    assert np.allclose(corner_angles(l[perm], bg), corner_angles(l, bg)[perm], atol=1e-14)


def test_corner_angles_triangle_inequality():
    """Invalid faces raise"""
    with pytest.raises(TriangleInequalityViolation):
        corner_angles([1.0, 1.0, 3.0], E2)
    with pytest.raises(TriangleInequalityViolation):
        corner_angles([1.0, 1.0, 2.0], H2)
    with pytest.raises(TriangleInequalityViolation):
        corner_angles([3.0, 3.0, 3.0], S2)


def test_face_areas():
    """Heron for the 3-4-5 triangle; defect and excess in curved backgrounds"""
    l = np.array([5.0, 3.0, 4.0])
    assert face_areas(l, corner_angles(l, E2), E2) == pytest.approx(6.0)
    l = np.array([1.0, 1.0, 1.0])
    assert face_areas(l, corner_angles(l, H2), H2) > 0
    assert face_areas(l, corner_angles(l, S2), S2) > 0


def test_vertex_curvatures_tetrahedron_and_flat_grid():
    """Regular tetrahedron K = pi; flat grid interior K = 0"""
    tet = tetrahedron()
    K = vertex_curvatures(tet, tet.corner_angles_from_positions())
    assert np.allclose(K, np.pi)

    grid = grid_disk(5)
    K = vertex_curvatures(grid, grid.corner_angles_from_positions())
    interior = ~grid.is_boundary_vertex
    assert np.allclose(K[interior], 0.0, atol=1e-12)
    assert K.sum() == pytest.approx(2 * np.pi * topology(grid).euler_characteristic)


@pytest.mark.parametrize("bg", [E2, H2, S2])
@pytest.mark.parametrize("make_mesh", [tetrahedron, lambda: torus(12, 10), lambda: genus_two(6)])
def test_gauss_bonnet_on_perturbed_metrics(bg, make_mesh):
    """Total curvature plus signed area is 2 pi chi after random conformal changes"""
    mesh = make_mesh()
    lengths = mesh.embedded_edge_lengths()
    lengths = lengths / lengths.max()
    metric = init_circle_packing(mesh, lengths, Scheme.YAMABE, bg)
    rng = np.random.default_rng(6)
    metric = metric.with_u(metric.u + rng.uniform(-0.02, 0.02, size=mesh.num_vertices))
    state = conformal_state(mesh, metric)
    K = vertex_curvatures(mesh, state.angles)
    assert abs(gauss_bonnet_residual(mesh, K, state.total_area, bg)) <= 1e-9


def test_eta_lambda_conversion():
    """eta = (e^l + eps_i eps_j e^-l) / 2 and its inverse branches"""
    assert eta_from_lambda(0.0, 1, 1) == pytest.approx(1.0)
    assert eta_from_lambda(np.log(2.0), 0, 1) == pytest.approx(1.0)
    lam = np.array([0.3, 1.2, -0.7])
    for eps in ((1, 1), (0, 1), (-1, 1)):
        if eps == (1, 1):
            lam_ok = np.abs(lam)
        else:
            lam_ok = lam
        eta = eta_from_lambda(lam_ok, *eps)
        assert np.allclose(lambda_from_eta(eta, *eps), lam_ok)


def test_lambda_from_eta_undefined():
    """Product +1 needs eta >= 1, product 0 needs eta > 0"""
    with pytest.raises(InverseUndefined):
        lambda_from_eta(0.5, 1, 1)
    with pytest.raises(InverseUndefined):
        lambda_from_eta(-1.0, 0, 1)


def test_init_tetrahedron_schemes():
    """Unit tetrahedron: radii and eta of each scheme reproduce the edges"""
    tet = tetrahedron()
    lengths = tet.embedded_edge_lengths()

    yamabe = init_circle_packing(tet, lengths, Scheme.YAMABE, E2)
    assert np.allclose(yamabe.u, 0.0)
    assert np.allclose(yamabe.eta, 0.5)

    inversive = init_circle_packing(tet, lengths, Scheme.INVERSIVE, E2)
    assert np.allclose(inversive.gamma, 1.0 / 3.0)
    assert np.allclose(inversive.eta, 3.5)

    virtual = init_circle_packing(tet, lengths, Scheme.VIRTUAL, E2)
    assert np.allclose(virtual.eta, 1.5)

    thurston = init_circle_packing(tet, lengths, Scheme.THURSTON, E2)
    assert np.allclose(thurston.gamma, 1.0 / np.sqrt(2.0))
    assert np.allclose(thurston.eta, 0.0, atol=1e-12)

    tangential = init_circle_packing(tet, lengths, Scheme.TANGENTIAL, E2)
    assert np.allclose(tangential.gamma, 0.5)
    assert np.allclose(tangential.edge_lengths(tet), lengths)

    for metric in (yamabe, inversive, virtual, thurston):
        assert np.allclose(metric.edge_lengths(tet), lengths, rtol=1e-12)
        metric.validate(tet)


@pytest.mark.parametrize("bg", [E2, H2, S2])
@pytest.mark.parametrize("scheme", [Scheme.INVERSIVE, Scheme.YAMABE, Scheme.VIRTUAL, Scheme.MIXED])
def test_init_reproduces_lengths(bg, scheme):
    """Solved eta reproduces the input lengths on a bumpy grid"""
    mesh = grid_disk(5, jitter=0.1, bump=0.2, seed=1)
    lengths = mesh.embedded_edge_lengths() * 0.5
    metric = init_circle_packing(mesh, lengths, scheme, bg)
    assert np.allclose(metric.edge_lengths(mesh), lengths, rtol=1e-11)
    if scheme is Scheme.MIXED:
        assert sorted(set(metric.epsilon.tolist())) == [-1, 0, 1]


def test_init_thurston_infeasible():
    """3-4-5 triangle needs an overlap angle beyond pi/2"""
    tri = single_triangle()
    with pytest.raises(InitializationInfeasible, match="Thurston"):
        init_circle_packing(tri, tri.embedded_edge_lengths(), Scheme.THURSTON, E2)


def test_init_rejects_wrong_length_count():
    """One length per edge"""
    with pytest.raises(InitializationInfeasible):
        init_circle_packing(tetrahedron(), np.ones(5), Scheme.YAMABE, E2)


def test_conformal_scaling_gauge():
    """Adding a constant to u scales E2 Yamabe lengths and leaves angles unchanged"""
    tet = tetrahedron()
    metric = init_circle_packing(tet, tet.embedded_edge_lengths(), Scheme.YAMABE, E2)
    base = conformal_state(tet, metric)
    shifted = conformal_state(tet, metric, metric.u + 0.7)
    assert np.allclose(shifted.lengths, base.lengths * np.exp(0.7))
    assert np.allclose(shifted.angles, base.angles)


def test_validate_rejects_inconsistent_metric():
    """Scheme indicators and sizes are checked"""
    tet = tetrahedron()
    metric = init_circle_packing(tet, tet.embedded_edge_lengths(), Scheme.YAMABE, E2)
    wrong_eps = CirclePackingMetric(metric.u, np.ones(4, dtype=int), metric.eta, E2, Scheme.YAMABE)
    with pytest.raises(InvalidMetric, match="epsilon"):
        wrong_eps.validate(tet)
    short = CirclePackingMetric(metric.u, metric.epsilon, metric.eta[:5], E2, Scheme.YAMABE)
    with pytest.raises(InvalidMetric):
        short.validate(tet)


def test_metric_document_round_trip():
    """u survives exactly; undefined hyperbolic radii are null"""
    mesh = grid_disk(4)
    metric = init_circle_packing(mesh, mesh.embedded_edge_lengths() * 0.5, Scheme.YAMABE, H2)
    metric = metric.with_u(metric.u)
    metric.u[0] = 0.1
    data = metric_to_dict(mesh, metric)
    assert data['gamma'][0] is None
    assert set(data['eta']) == {f"{i},{j}" for i, j in mesh.edges.tolist()}
    restored = CirclePackingMetric(np.asarray(data['u']), np.asarray(data['epsilon']),
                                   metric.eta, data['bg'], data['scheme'])
    assert np.array_equal(restored.u, metric.u)


def test_metric_from_dict_validates():
    """Documents with unknown edges or missing eta are rejected"""
    tet = tetrahedron()
    metric = init_circle_packing(tet, tet.embedded_edge_lengths(), Scheme.INVERSIVE, E2)
    data = metric_to_dict(tet, metric)
    restored = metric_from_dict(tet, data)
    assert np.array_equal(restored.u, metric.u)
    assert np.array_equal(restored.eta, metric.eta)

    broken = dict(data, eta={k: v for k, v in list(data['eta'].items())[:-1]})
    with pytest.raises(InvalidMetric, match="missing eta"):
        metric_from_dict(tet, broken)
    with pytest.raises(InvalidMetric):
        metric_from_dict(tet, dict(data, eta=dict(data['eta'], **{"0,9": 1.0})))
