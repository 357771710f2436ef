import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from formdiff import generators
from formdiff.algebra import cup, cup_table, fundamental_chain, wedge
from formdiff.errors import DegreeOverflow
from formdiff.forman import Form, coboundary, exterior_derivative, forman_iso, unit_form
from formdiff.metric import build_metric
from formdiff.orientation import Chain, Cochain, evaluate

from conftest import subdivide
from test_forman import as_dict, random_form

NAMES = ["two-triangles", "grid2", "torus", "annulus", "tetrahedron"]


def basis(fc, p, i):
    v = np.zeros(fc.n_kcells(p))
    v[i] = 1.0
    return Cochain(p, v)


def random_cochain(fc, p, rng):
    return Cochain(p, rng.standard_normal(fc.n_kcells(p)))


def test_node_cup_itself(fc_two_triangles):
    fc = fc_two_triangles
    for i in range(fc.n_kcells(0)):
        a = basis(fc, 0, i)
        assert np.array_equal(cup(fc, a, a).coefficients, a.coefficients)


def test_node_cup_incident_edge_and_face(fc_two_triangles):
    fc = fc_two_triangles
    e = 7
    ends = fc.corners(1)[e]
    for node in ends:
        got = cup(fc, basis(fc, 0, node), basis(fc, 1, e)).coefficients
        assert np.array_equal(got, basis(fc, 1, e).coefficients / 2)
    f = 3
    for node in fc.corners(2)[f]:
        got = cup(fc, basis(fc, 0, node), basis(fc, 2, f)).coefficients
        assert np.array_equal(got, basis(fc, 2, f).coefficients / 4)
    far = next(n for n in range(fc.n_kcells(0)) if n not in fc.corners(2)[f])
    assert not np.any(cup(fc, basis(fc, 0, far), basis(fc, 2, f)).coefficients)


def test_edges_meeting_at_a_corner(fc_two_triangles):
    fc = fc_two_triangles
    corners = fc.corners(2)[0]
    # the two K-edges of face 0 leaving its first corner
    edges = [fc.kcells_of_pairs(1, [corners[m]], [corners[0]])[0] for m in (1, 2)]
    ab = cup(fc, basis(fc, 1, edges[0]), basis(fc, 1, edges[1])).coefficients
    ba = cup(fc, basis(fc, 1, edges[1]), basis(fc, 1, edges[0])).coefficients
    assert np.count_nonzero(ab) == 1
    assert abs(ab[0]) == 0.25
    assert np.array_equal(ab, -ba)


def test_cup_degree_overflow(fc_two_triangles):
    fc = fc_two_triangles
    with pytest.raises(DegreeOverflow):
        cup(fc, basis(fc, 2, 0), basis(fc, 1, 0))


@pytest.mark.parametrize("name", NAMES)
def test_leibniz_rule(complexes, name):
    fc = complexes[name]
    rng = np.random.default_rng(7)
    d = fc.dim
    worst = 0.0
    for trial in range(200):
        p = trial % d
        q = rng.integers(0, d - p)
        s, t = random_cochain(fc, p, rng), random_cochain(fc, q, rng)
        lhs = coboundary(fc, cup(fc, s, t)).coefficients
        rhs = (cup(fc, coboundary(fc, s), t) + (-1) ** p * cup(fc, s, coboundary(fc, t))).coefficients
        worst = max(worst, np.abs(lhs - rhs).max() / max(1.0, np.abs(lhs).max()))
    assert worst <= 1e-12


@pytest.mark.parametrize("name", NAMES)
def test_unit_law(complexes, name, rng):
    fc = complexes[name]
    one = forman_iso(fc, unit_form(fc.m))
    for p in range(fc.dim + 1):
        s = random_cochain(fc, p, rng)
        # 2^k partial products of s/2^k are summed, so allow last-bit rounding
        np.testing.assert_allclose(cup(fc, one, s).coefficients, s.coefficients, rtol=4e-16, atol=0)
        np.testing.assert_allclose(cup(fc, s, one).coefficients, s.coefficients, rtol=4e-16, atol=0)


@pytest.mark.parametrize("name", NAMES)
def test_products_live_on_common_cells(complexes, name):
    fc = complexes[name]
    d = fc.dim
    for p in range(d + 1):
        for q in range(d + 1 - p):
            a, b, x, coef = cup_table(fc).entries(p, q)
            assert np.all(np.abs(coef) == 2.0 ** -(p + q))
            corners_x = fc.corners(p + q)[x]
            for cells, k in ((a, p), (b, q)):
                sub = fc.corners(k)[cells]
                assert all(set(s) <= set(c) for s, c in zip(sub.tolist(), corners_x.tolist()))
            # the two factors meet in exactly one K-node
            meet = [len(set(s) & set(t)) for s, t in zip(fc.corners(p)[a].tolist(), fc.corners(q)[b].tolist())]
            assert set(meet) == {1}


@pytest.mark.parametrize("name", NAMES)
def test_graded_anticommutation(complexes, name):
    fc = complexes[name]
    d = fc.dim
    for p in range(d + 1):
        for q in range(d + 1 - p):
            a, b, x, coef = cup_table(fc).entries(p, q)
            a2, b2, x2, coef2 = cup_table(fc).entries(q, p)
            forward = {(i, j, k): c for i, j, k, c in zip(a, b, x, coef)}
            backward = {(j, i, k): c for i, j, k, c in zip(a2, b2, x2, coef2)}
            assert forward.keys() == backward.keys()
            assert all(forward[key] == (-1) ** (p * q) * backward[key] for key in forward)


def test_wedge_unit_and_leibniz(fc_grid2, rng):
    fc = fc_grid2
    one = unit_form(fc.m)
    mesh = fc.m.mesh
    for p in range(3):
        omega = random_form(mesh, p, rng, density=0.3)
        assert as_dict(wedge(fc, one, omega)) == pytest.approx(as_dict(omega))
        assert as_dict(wedge(fc, omega, one)) == pytest.approx(as_dict(omega))
    omega, eta = random_form(mesh, 1, rng, 0.3), random_form(mesh, 1, rng, 0.3)
    lhs = forman_iso(fc, exterior_derivative(fc.m, wedge(fc, omega, eta))).coefficients
    rhs = (forman_iso(fc, wedge(fc, exterior_derivative(fc.m, omega), eta))
           - forman_iso(fc, wedge(fc, omega, exterior_derivative(fc.m, eta)))).coefficients
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_wedge_of_disjoint_supports(fc_grid2):
    fc = fc_grid2
    mesh = fc.m.mesh
    x = mesh.centroids(3)
    lo, hi = int(np.argmin(x.sum(axis=1))), int(np.argmax(x.sum(axis=1)))
    omega = Form.basis((3, lo), (3, lo))
    eta = Form.basis((3, hi), (2, int(mesh.faces((3, hi), 2)[0])))
    assert as_dict(wedge(fc, omega, eta)) == {}


def test_evaluation_identities(fc_grid2):
    fc = fc_grid2
    ones = Cochain(3, np.ones(fc.n_kcells(3)))
    assert evaluate(ones, fundamental_chain(fc)) == fc.n_kcells(3)
    mc = build_metric(fc)
    assert evaluate(mc.vol, fundamental_chain(fc)) == pytest.approx(1.0, rel=1e-12)
    assert evaluate(basis(fc, 1, 4), Chain(1, basis(fc, 1, 4).coefficients)) == 1.0
    assert evaluate(basis(fc, 1, 4), Chain(1, basis(fc, 1, 5).coefficients)) == 0.0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 20), st.integers(0, 1), st.integers(0, 1), st.floats(-3, 3))
def test_cup_is_bilinear(seed, p, q, scale):
    fc = subdivide(generators.generate_regular_grid(2, dim=2))
    rng = np.random.default_rng(seed)
    a, s = random_cochain(fc, p, rng), random_cochain(fc, p, rng)
    b = random_cochain(fc, q, rng)
    both = cup(fc, a + scale * s, b).coefficients
    apart = cup(fc, a, b).coefficients + scale * cup(fc, s, b).coefficients
    assert np.allclose(both, apart, atol=1e-12)
