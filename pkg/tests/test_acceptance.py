"""End-to-end acceptance checks.

Each test prints a single ``PASS`` or ``FAIL`` line; the lines are repeated
in the terminal summary.  The percolation study is the slow one (tens of
minutes); deselect it with ``-m "not slow"``.
"""

import time

import numpy as np
import pytest
import scipy.sparse as sp

from formdiff import generators
from formdiff.algebra import cup
from formdiff.composites import InclusionStudy, percolation_sweep, prepare
from formdiff.diffusion import (apply_boundary_conditions, diffusion_system, run_slab, slab_conditions,
                                solve_steady, step_transient, uniform_diffusivity)
from formdiff.forman import Form, coboundary, exterior_derivative
from formdiff.io import import_tess
from formdiff.metric import (adjoint_coboundary, build_metric, hodge_report, hodge_star, inner_product)
from formdiff.orientation import Cochain

from conftest import DATA, subdivide
from test_forman import random_form

RESULTS: list[str] = []


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def slab_alpha(n):
    mc = prepare(generators.generate_regular_grid(n))
    return run_slab(mc, uniform_diffusivity(mc.fc)).alpha_eff


@pytest.fixture(scope="module")
def grid20():
    t = time.perf_counter()
    mc = prepare(generators.generate_regular_grid(20))
    res = run_slab(mc, uniform_diffusivity(mc.fc))
    return mc, res, time.perf_counter() - t


def test_criterion_1_grid_series():
    expected = {2: 1.5625, 4: 1.2656, 8: 1.1289, 16: 1.0635}
    t = time.perf_counter()
    got = {n: slab_alpha(n) for n in expected}
    elapsed = time.perf_counter() - t
    ok = all(abs(got[n] - v) <= 5e-4 for n, v in expected.items()) and elapsed <= 60
    shown = ", ".join(f"n={n}: {a:.6f}" for n, a in got.items())
    report(1, ok, f"{shown} ({elapsed:.1f} s)")


def test_criterion_2_flux_breakdown(grid20):
    _, res, elapsed = grid20
    expected = {1: 0.2756, 2: 0.5250, 3: 0.2500}
    ok = abs(res.flux_low - 1.0506) <= 5e-4 and abs(res.flux_high - 1.0506) <= 5e-4
    ok &= abs(res.flux_low - res.flux_high) <= 1e-8 * abs(res.flux_low)
    for side in (res.breakdown_low, res.breakdown_high):
        ok &= all(abs(side[cls] - v) <= 5e-4 for cls, v in expected.items())
    parts = ", ".join(f"{cls.name} {v:.6f}" for cls, v in res.breakdown_low.items())
    report(2, ok and elapsed <= 300,
           f"flux z=0 {res.flux_low:.8f}, z=1 {res.flux_high:.8f}; {parts} ({elapsed:.1f} s)")


def test_criterion_3_subdivision_counts(grid20):
    mc, _, _ = grid20
    cube = subdivide(generators.generate_regular_grid(1)).counts
    tet = subdivide(generators.tetrahedron()).counts
    ok = mc.fc.counts[:2] == (68921, 201720) and cube[3] == 8 and tet[3] == 4
    report(3, ok, f"grid 20: {mc.fc.counts[:2]}, cube volumes {cube[3]}, tetrahedron volumes {tet[3]}")


def interval_rows(mode):
    fc = subdivide(generators.interval_mesh(2))
    mc = build_metric(fc, mode)
    order = np.argsort(fc.node_positions[:, 0])
    h = 0.25
    lap = mc.laplacian_matrix(0).toarray()[np.ix_(order, order)] * h ** 2
    return lap


def test_criterion_4_interval_stencils():
    lap = interval_rows("trivial")
    interior = (lap[2, 2], lap[2, 1], lap[2, 3])
    near = (lap[1, 1], lap[1, 0], lap[1, 2])
    ok = np.allclose(interior, (2, -1, -1), atol=1e-12, rtol=0)
    ok &= np.allclose(near, (7 / 8, -3 / 8, -1), atol=1e-12, rtol=0)
    full = interval_rows("curvature")
    ok_curv = all(np.allclose((full[i, i], full[i, i - 1], full[i, i + 1]), (2, -1, -1), atol=1e-12)
                  for i in (1, 2, 3))
    report(4, bool(ok and ok_curv),
           f"trivial interior {np.round(interior, 12).tolist()}, near boundary {np.round(near, 12).tolist()} "
           f"(target (0.875, -0.375, -1)); curvature rows full stencil: {ok_curv}")


def integer_exact_zero(a, b):
    prod = (a @ b).tocoo()
    ints = all(np.array_equal(m.data, np.round(m.data)) for m in (a.tocoo(), b.tocoo()))
    return ints and not np.any(prod.data)


def test_criterion_5_exactness_and_adjointness():
    rng = np.random.default_rng(2024)
    worst = {"leibniz": 0.0, "adjoint": 0.0, "min_eig": np.inf}
    ok = True
    for mesh in (generators.two_triangles(), generators.generate_regular_grid(2), generators.torus_surface()):
        fc = subdivide(mesh)
        mc = build_metric(fc)
        d = fc.dim
        for p in range(1, d):
            ok &= integer_exact_zero(fc.m.boundary(p), fc.m.boundary(p + 1))
            ok &= integer_exact_zero(fc.k.boundary(p), fc.k.boundary(p + 1))
            ok &= integer_exact_zero(mc.coboundary(p), mc.coboundary(p - 1))
        for p in range(d - 1):
            # integer coefficients, so the cancellation must be exact
            sample = random_form(fc.m.mesh, p, rng, density=0.5)
            omega = Form(p, {k: float(np.round(10 * v)) for k, v in sample.coefficients.items()})
            twice = exterior_derivative(fc.m, exterior_derivative(fc.m, omega))
            ok &= not any(twice.coefficients.values())
        for trial in range(60):
            p = trial % d
            q = int(rng.integers(0, d - p))
            s = Cochain(p, rng.standard_normal(fc.n_kcells(p)))
            t = Cochain(q, rng.standard_normal(fc.n_kcells(q)))
            lhs = coboundary(fc, cup(fc, s, t)).coefficients
            rhs = (cup(fc, coboundary(fc, s), t) + (-1) ** p * cup(fc, s, coboundary(fc, t))).coefficients
            worst["leibniz"] = max(worst["leibniz"], np.abs(lhs - rhs).max() / max(1.0, np.abs(lhs).max()))
        for p in range(d):
            s = Cochain(p, rng.standard_normal(fc.n_kcells(p)))
            t = Cochain(p + 1, rng.standard_normal(fc.n_kcells(p + 1)))
            a = inner_product(mc, coboundary(fc, s), t)
            b = inner_product(mc, s, adjoint_coboundary(mc, t))
            worst["adjoint"] = max(worst["adjoint"], abs(a - b) / max(abs(a), abs(b)))
        for p in range(d + 1):
            wl = (sp.diags(mc.weights[p]) @ mc.laplacian_matrix(p)).toarray()
            scale = np.abs(wl).max()
            ok &= np.abs(wl - wl.T).max() <= 1e-12 * scale
            worst["min_eig"] = min(worst["min_eig"], np.linalg.eigvalsh(0.5 * (wl + wl.T)).min())
    ok = bool(ok and worst["leibniz"] <= 1e-12 and worst["adjoint"] <= 1e-12 and worst["min_eig"] >= -1e-10)
    report(5, ok, f"integer exactness and D^2 = 0 hold: {ok}; Leibniz {worst['leibniz']:.1e}, "
                  f"adjoint {worst['adjoint']:.1e}, min eigenvalue {worst['min_eig']:.1e}")


def test_criterion_6_hodge_and_topology():
    cases = {"cube grid": (generators.generate_regular_grid(2), (1, 0, 0, 0)),
             "annulus": (generators.annulus(), (1, 1, 0)),
             "torus": (generators.torus_surface(), (1, 2, 1))}
    ok = True
    notes = []
    for name, (mesh, betti) in cases.items():
        fc = subdivide(mesh)
        rep = hodge_report(build_metric(fc), seed=1)
        ok &= tuple(rep.kernel_dims) == betti and max(rep.residuals) <= 1e-9
        trivial = build_metric(fc, "trivial")
        one = Cochain(0, np.ones(fc.n_kcells(0)))
        total = mesh.measures(mesh.dim).sum()
        err_mass = abs(inner_product(trivial, one, one) - total) / total
        err_star = np.abs(hodge_star(trivial, trivial.vol).coefficients - 1).max()
        ok &= err_mass <= 1e-12 and err_star <= 1e-12
        notes.append(f"{name} {tuple(rep.kernel_dims)} residual {max(rep.residuals):.1e}")
    report(6, bool(ok), "; ".join(notes))


def test_criterion_7_boundary_curvature():
    fc = subdivide(generators.generate_regular_grid(3))
    kappa = fc.node_curvatures()
    x = fc.node_positions
    on_walls = np.sum(np.isclose(x, 0.0) | np.isclose(x, 1.0), axis=1)
    worst = np.abs(kappa - 2.0 ** on_walls).max()
    seen = {int(k): float(np.round(kappa[on_walls == k].mean(), 9)) for k in range(4)}
    report(7, bool(worst <= 1e-9), f"curvature by number of walls {seen}, max error {worst:.1e}")


def test_criterion_9_transient_limit():
    mc = prepare(generators.generate_regular_grid(8))
    red = apply_boundary_conditions(diffusion_system(mc, uniform_diffusivity(mc.fc)), slab_conditions(mc.fc))
    steady = solve_steady(red, tol=1e-12).u
    u = red.expand(np.zeros(red.free.size))
    for _ in range(80):
        u = step_transient(red, u, 0.05)
    gap = np.abs(u - steady).max()
    report(9, bool(gap <= 1e-6), f"max |u(t=4) - u_steady| = {gap:.1e}")


@pytest.mark.slow
def test_criterion_8_percolation():
    t = time.perf_counter()
    mc = prepare(import_tess(DATA / "voronoi_2500.tess"))
    curves = {}
    for kind in ("GNP", "CNT"):
        study = InclusionStudy(kind, fractions=np.linspace(0, 1, 25), paths=20, seed=7)
        curves[kind] = percolation_sweep(study, mc)
    elapsed = time.perf_counter() - t
    gnp, cnt = curves["GNP"], curves["CNT"]
    gnp_frac, gnp_area = gnp.steepest_rise()
    cnt_frac, _ = cnt.steepest_rise()
    rerun = percolation_sweep(InclusionStudy("GNP", fractions=np.linspace(0, 1, 25), paths=2, seed=7), mc)
    identical = np.array_equal(rerun.samples, gnp.samples[:2])
    sigmoid = all(np.all(np.diff(c.mean_alpha_eff) >= -1e-9 * c.mean_alpha_eff[1:])
                  and c.mean_alpha_eff[-1] > 1e6 * c.mean_alpha_eff[0] for c in curves.values())
    failed = int(gnp.n_failed.sum() + cnt.n_failed.sum())
    ok = sigmoid and 5 <= gnp_area <= 12 and cnt_frac > gnp_frac and identical and elapsed <= 1800
    report(8, bool(ok), f"GNP steepest rise at area {gnp_area:.2f} (fraction {gnp_frac:.3f}), "
                        f"CNT at fraction {cnt_frac:.3f}; rerun identical {identical}; "
                        f"failed solves {failed}; {elapsed:.0f} s")
