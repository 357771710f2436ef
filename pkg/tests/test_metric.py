import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from formdiff import generators
from formdiff.algebra import cup, fundamental_chain
from formdiff.forman import forman_iso, unit_form
from formdiff.metric import (adjoint_coboundary, build_metric, hodge_report, hodge_star, inner_product,
                             laplacian, laplacian_0, riemann_integral)
from formdiff.orientation import Cochain, evaluate

from conftest import subdivide
from test_algebra import basis, random_cochain

NAMES = ["two-triangles", "grid2", "torus", "annulus", "tetrahedron"]


@pytest.fixture(scope="module")
def interval():
    # M has two cells, K four with h = 1/4
    return subdivide(generators.interval_mesh(2))


def by_position(fc):
    return np.argsort(fc.node_positions[:, 0]), np.argsort(fc.node_positions[fc.corners(1)].mean(axis=1)[:, 0])


def test_interval_trivial_weights(interval):
    h = 0.25
    mc = build_metric(interval, "trivial")
    nodes, edges = by_position(interval)
    assert np.allclose(mc.weights[0][nodes], [h / 2, h, h, h, h / 2], rtol=1e-14)
    assert np.allclose(mc.weights[1][edges], [3 / (4 * h), 1 / h, 1 / h, 3 / (4 * h)], rtol=1e-14)


def test_interval_curvature_weights(interval):
    h = 0.25
    mc = build_metric(interval, "curvature")
    nodes, edges = by_position(interval)
    assert np.allclose(mc.kappa[nodes], [2, 1, 1, 1, 2])
    assert np.allclose(mc.weights[0], h, rtol=1e-14)
    assert np.allclose(mc.weights[1], 1 / h, rtol=1e-14)


def test_edge_weight_closed_form(fc_annulus):
    # independent loop over the edge's two ends and the K-faces around each
    fc = fc_annulus
    mc = build_metric(fc)
    kappa = fc.node_curvatures()
    face_corners = fc.corners(2)
    face_mu = fc.kcell_measures(2)
    for e in range(0, fc.n_kcells(1), 7):
        mu = fc.kcell_measures(1)[e]
        total = 0.0
        for node in fc.corners(1)[e]:
            around = [face_mu[f] for f in range(fc.n_kcells(2)) if node in face_corners[f]]
            total += kappa[node] * sum(around)
        assert mc.weights[1][e] == pytest.approx(total / (8 * mu ** 2), rel=1e-13)


def test_integral_of_unit(fc_grid2):
    mc = build_metric(fc_grid2)
    one = forman_iso(fc_grid2, unit_form(fc_grid2.m))
    assert riemann_integral(mc, one) == pytest.approx(1.0, rel=1e-13)
    assert riemann_integral(mc, 0 * one) == 0.0


def test_integral_of_interior_node(fc_grid2):
    fc = fc_grid2
    mc = build_metric(fc)
    node = int(np.argmin(np.linalg.norm(fc.node_positions - 0.5, axis=1)))
    around = [c for c in range(fc.n_kcells(3)) if node in fc.corners(3)[c]]
    assert len(around) == 8
    expected = fc.kcell_measures(3)[around].sum() / 8
    assert riemann_integral(mc, basis(fc, 0, node)) == pytest.approx(expected, rel=1e-14)


def test_unit_norm_is_volume(fc_grid2):
    mc = build_metric(fc_grid2, "trivial")
    one = forman_iso(fc_grid2, unit_form(fc_grid2.m))
    assert inner_product(mc, one, one) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("name", NAMES)
def test_positive_and_diagonal(metrics, name):
    mc = metrics[name]
    rng = np.random.default_rng(1)
    for p in range(mc.dim + 1):
        assert np.all(mc.weights[p] > 0)
        for _ in range(100 // (mc.dim + 1)):
            s = random_cochain(mc.fc, p, rng)
            assert inner_product(mc, s, s) > 0
        if mc.fc.n_kcells(p) > 1:
            assert inner_product(mc, basis(mc.fc, p, 0), basis(mc.fc, p, 1)) == 0.0


@pytest.mark.parametrize("name", NAMES)
def test_adjointness(metrics, name):
    mc = metrics[name]
    rng = np.random.default_rng(2)
    for p in range(mc.dim):
        delta = mc.coboundary(p)
        for _ in range(200 // mc.dim):
            s, t = random_cochain(mc.fc, p, rng), random_cochain(mc.fc, p + 1, rng)
            lhs = inner_product(mc, Cochain(p + 1, delta @ s.coefficients), t)
            rhs = inner_product(mc, s, adjoint_coboundary(mc, t))
            assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


@pytest.mark.parametrize("name", NAMES)
def test_adjoint_squares_to_zero(metrics, name, rng):
    mc = metrics[name]
    for p in range(2, mc.dim + 1):
        t = random_cochain(mc.fc, p, rng)
        twice = adjoint_coboundary(mc, adjoint_coboundary(mc, t)).coefficients
        assert np.abs(twice).max() <= 1e-12 * np.abs(t.coefficients).max() * np.abs(
            mc.adjoint_matrix(p - 1)).max() * np.abs(mc.adjoint_matrix(p)).max()


def test_interval_adjoint_signs(interval):
    mc = build_metric(interval, "trivial")
    nodes, edges = by_position(interval)
    e2 = edges[1]
    out = adjoint_coboundary(mc, basis(interval, 1, e2)).coefficients
    w0, w1 = mc.weights
    assert out[nodes[1]] == pytest.approx(-w1[e2] / w0[nodes[1]])
    assert out[nodes[2]] == pytest.approx(w1[e2] / w0[nodes[2]])
    assert np.count_nonzero(out) == 2


def stencil(mc, fc, i):
    """Row i of the 0-Laplacian (in position order), scaled by h^2."""
    nodes, _ = by_position(fc)
    lap = mc.laplacian_matrix(0).toarray()
    return lap[nodes[i]][nodes] * 0.25 ** 2


def test_interval_stencils_trivial(interval):
    mc = build_metric(interval, "trivial")
    assert np.allclose(stencil(mc, interval, 2), [0, -1, 2, -1, 0], atol=1e-12)
    # near the boundary the row differs from the finite difference stencil:
    # W1 = 3/(4h) on the end edge and W0 = h at the node give 7/4 and -3/4
    assert np.allclose(stencil(mc, interval, 1), [-3 / 4, 7 / 4, -1, 0, 0], atol=1e-12)
    # as the image of the basis cochain N^1 the end coefficient is divided by W0(N^0) = h/2
    nodes, _ = by_position(interval)
    image = laplacian_0(mc, basis(interval, 0, nodes[1])).coefficients[nodes] * 0.25 ** 2
    assert np.allclose(image, [-3 / 2, 7 / 4, -1, 0, 0], atol=1e-12)


def test_interval_stencils_curvature(interval):
    mc = build_metric(interval, "curvature")
    for i in (1, 2, 3):
        row = np.zeros(5)
        row[[i - 1, i, i + 1]] = [-1, 2, -1]
        assert np.allclose(stencil(mc, interval, i), row, atol=1e-12)


def test_laplacian_0_on_cochain(interval):
    mc = build_metric(interval, "curvature")
    nodes, _ = by_position(interval)
    out = laplacian_0(mc, basis(interval, 0, nodes[2])).coefficients
    assert out[nodes[2]] == pytest.approx(2 / 0.25 ** 2)


@pytest.mark.parametrize("name", NAMES)
def test_laplacian_symmetric_psd(metrics, name):
    mc = metrics[name]
    for p in range(mc.dim + 1):
        sym = (np.diag(mc.weights[p]) @ laplacian(mc, p).toarray())
        assert np.abs(sym - sym.T).max() <= 1e-12 * np.abs(sym).max()
        assert sla.eigvalsh(0.5 * (sym + sym.T)).min() >= -1e-10 * np.abs(sym).max()


@pytest.mark.parametrize("name", NAMES)
def test_laplacian_commutes_with_coboundary(metrics, name, rng):
    mc = metrics[name]
    for p in range(mc.dim):
        s = rng.standard_normal(mc.fc.n_kcells(p))
        delta = mc.coboundary(p)
        lhs = laplacian(mc, p + 1) @ (delta @ s)
        rhs = delta @ (laplacian(mc, p) @ s)
        assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(lhs).max())


@pytest.mark.parametrize("name,betti", [("grid2", [1, 0, 0, 0]), ("torus", [1, 2, 1]),
                                        ("annulus", [1, 1, 0]), ("two-triangles", [1, 0, 0])])
def test_harmonic_dimensions(metrics, name, betti):
    report = hodge_report(metrics[name])
    assert report.kernel_dims == betti
    assert report.consistent
    assert max(report.residuals) <= 1e-9
    assert max(report.orthogonality) <= 1e-9


def test_constants_span_harmonic_0(metrics):
    from formdiff.metric import harmonic_basis
    h = harmonic_basis(metrics["grid2"], 0)
    assert h.shape[1] == 1
    assert np.ptp(h[:, 0]) <= 1e-9 * np.abs(h).max()


def test_star_of_volume_is_unit(fc_grid2):
    mc = build_metric(fc_grid2, "trivial")
    one = forman_iso(fc_grid2, unit_form(fc_grid2.m)).coefficients
    assert np.allclose(hodge_star(mc, mc.vol).coefficients, one, rtol=1e-12)


def test_star_of_node_in_2d(fc_annulus):
    fc = fc_annulus
    mc = build_metric(fc)
    node = 5
    out = hodge_star(mc, basis(fc, 0, node)).coefficients
    around = [f for f in range(fc.n_kcells(2)) if node in fc.corners(2)[f]]
    assert 1 <= len(around) <= 4
    expected = np.zeros(fc.n_kcells(2))
    for f in around:
        expected[f] = fc.k.signs[2][f] * 0.25 / mc.weights[2][f]
    assert np.allclose(np.abs(out), np.abs(expected), rtol=1e-13)
    assert np.count_nonzero(out) == len(around)


@pytest.mark.parametrize("name", NAMES)
def test_star_defining_identity(metrics, name):
    mc = metrics[name]
    fc = mc.fc
    d = mc.dim
    rng = np.random.default_rng(4)
    for p in range(d + 1):
        for _ in range(100 // (d + 1)):
            s, t = random_cochain(fc, d - p, rng), random_cochain(fc, p, rng)
            lhs = inner_product(mc, s, hodge_star(mc, t))
            rhs = evaluate(cup(fc, s, t), fundamental_chain(fc))
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))


@pytest.mark.parametrize("name", NAMES)
def test_star_sign_symmetry(metrics, name, rng):
    mc = metrics[name]
    d = mc.dim
    for p in range(d + 1):
        s, t = random_cochain(mc.fc, p, rng), random_cochain(mc.fc, d - p, rng)
        lhs = inner_product(mc, hodge_star(mc, s), t)
        rhs = (-1) ** (p * (d - p)) * inner_product(mc, s, hodge_star(mc, t))
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_star_intertwines_on_closed_mesh(metrics, rng):
    mc = metrics["torus"]
    d = mc.dim
    for p in range(d):
        s = random_cochain(mc.fc, p, rng)
        lhs = hodge_star(mc, Cochain(p + 1, mc.coboundary(p) @ s.coefficients)).coefficients
        rhs = (-1) ** (d - p) * adjoint_coboundary(mc, hodge_star(mc, s)).coefficients
        assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(lhs).max())


def test_poincare_rank_equality(metrics):
    report = hodge_report(metrics["torus"])
    assert report.kernel_dims == report.kernel_dims[::-1]


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 10.0))
def test_weights_scale_with_length(s):
    base = generators.generate_regular_grid(2, dim=2)
    scaled = type(base)(base.vertices * s, [base.incidence(p) for p in (1, 2)])
    mc0, mc1 = build_metric(subdivide(base)), build_metric(subdivide(scaled))
    d = 2
    for p in range(d + 1):
        assert np.allclose(mc1.weights[p], mc0.weights[p] * s ** (d - 2 * p), rtol=1e-10)
    lap0, lap1 = mc0.laplacian_matrix(0).toarray(), mc1.laplacian_matrix(0).toarray()
    assert np.allclose(lap1, lap0 / s ** 2, rtol=1e-10, atol=1e-12 * np.abs(lap0).max() / s ** 2)


def test_unit_metric_identity(fc_grid2, rng):
    # g(1, c) = c under trivial kappa: the unit pairs with weights only through vol
    mc = build_metric(fc_grid2, "trivial")
    one = forman_iso(fc_grid2, unit_form(fc_grid2.m))
    c = random_cochain(fc_grid2, 0, rng)
    assert riemann_integral(mc, c) == pytest.approx(inner_product(mc, one, c), rel=1e-12)
