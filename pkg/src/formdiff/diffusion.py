"""Diffusion with per-K-edge diffusivity: assembly, boundary conditions, solves, fluxes."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components
import cvxopt
import cvxopt.cholmod
import pyamg
import pymetis

from .errors import ConflictingBC, InvalidGeometry, NonPositiveAlpha, SolverDivergence
from .forman import FormanComplex
from .metric import MetricContext

log = logging.getLogger(__name__)

PLANE_TOL = 1e-9
DIRECT_LIMIT = 500_000
REFINE_STEPS = 2
ND_THRESHOLD = 2000
CONTRAST_SPLIT = 1e4


class EdgeClass(IntEnum):
    """Type of a K-edge, named after the M-cells at its two ends."""

    NODE_EDGE = 1
    EDGE_FACE = 2
    FACE_VOLUME = 3


def classify_edges(fc: FormanComplex) -> np.ndarray:
    """Class of every K-edge: the dimension of the upper M-cell of its pair."""
    return fc.gid_dims(fc.pairs(1)[:, 0]).astype(np.int64)


@dataclass
class DiffusivityAssignment:
    alpha: np.ndarray
    provenance: np.ndarray   # global id of the M-cell whose interior holds the K-edge

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        if np.any(~(self.alpha > 0)):
            raise NonPositiveAlpha("diffusivities must be positive")


def uniform_diffusivity(fc: FormanComplex, value: float | Mapping[int, float] = 1.0) -> DiffusivityAssignment:
    """Constant alpha, or one value per edge class given as {class: alpha}."""
    classes = classify_edges(fc)
    if isinstance(value, Mapping):
        table = np.zeros(4)
        for cls, v in value.items():
            table[int(cls)] = float(v)
        alpha = table[classes]
    else:
        alpha = np.full(fc.n_kcells(1), float(value))
    return DiffusivityAssignment(alpha, fc.pairs(1)[:, 0].copy())


def stiffness_matrix(mc: MetricContext, da: DiffusivityAssignment) -> sp.csr_matrix:
    """S = delta0^T diag(alpha W1) delta0, symmetric positive semidefinite."""
    if np.any(~(da.alpha > 0)):
        raise NonPositiveAlpha("diffusivities must be positive")
    delta = mc.coboundary(0)
    return (delta.T @ sp.diags(da.alpha * mc.weights[1]) @ delta).tocsr()


def modified_laplacian(mc: MetricContext, da: DiffusivityAssignment) -> sp.csr_matrix:
    """W0^-1 delta0^T diag(alpha W1) delta0."""
    return (sp.diags(1.0 / mc.weights[0]) @ stiffness_matrix(mc, da)).tocsr()


# -- boundary conditions --------------------------------------------------

@dataclass
class BoundaryConditionSet:
    """Dirichlet values and Neumann fluxes per K-node.

    ``neumann_flux`` holds the total outward flux through the boundary at a
    node (zero when absent).  ``surfaces`` optionally names node sets whose
    boundary fluxes are reported with a solution.
    """

    dirichlet: dict[int, float] = field(default_factory=dict)
    neumann_flux: dict[int, float] = field(default_factory=dict)
    surfaces: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        both = set(self.dirichlet) & set(self.neumann_flux)
        if both:
            raise ConflictingBC(f"nodes {sorted(both)[:5]} have both Dirichlet and Neumann data")


@dataclass
class DiffusionSystem:
    mc: MetricContext
    da: DiffusivityAssignment
    stiffness: sp.csr_matrix
    mass: np.ndarray

    @property
    def n(self) -> int:
        return self.stiffness.shape[0]


def diffusion_system(mc: MetricContext, da: DiffusivityAssignment) -> DiffusionSystem:
    return DiffusionSystem(mc, da, stiffness_matrix(mc, da), mc.weights[0])


@dataclass
class ReducedSystem:
    system: DiffusionSystem
    bc: BoundaryConditionSet
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        u = np.empty(self.system.n)
        u[self.free] = u_free
        u[self.fixed] = self.fixed_values
        return u


def apply_boundary_conditions(system: DiffusionSystem, bc: BoundaryConditionSet) -> ReducedSystem:
    """Eliminate Dirichlet nodes from the symmetric system."""
    BoundaryConditionSet.__post_init__(bc)
    n = system.n
    fixed = np.array(sorted(bc.dirichlet), dtype=np.int64)
    values = np.array([bc.dirichlet[i] for i in fixed], dtype=float)
    is_free = np.ones(n, dtype=bool)
    is_free[fixed] = False
    free = np.flatnonzero(is_free)
    s = system.stiffness
    rhs = np.zeros(n)
    for node, flux in bc.neumann_flux.items():
        rhs[node] -= flux
    rhs = rhs[free] - s[free][:, fixed] @ values
    matrix = s[free][:, free].tocsr()
    return ReducedSystem(system, bc, matrix, rhs, free, fixed, values)


# -- solvers ---------------------------------------------------------------

@dataclass
class SteadySolution:
    u: np.ndarray
    residual: float
    iterations: int
    boundary_flux: dict[str, float] = field(default_factory=dict)


def nested_dissection(matrix: sp.spmatrix) -> np.ndarray:
    """Fill-reducing elimination order of a symmetric sparsity pattern (METIS)."""
    graph = sp.csr_matrix(matrix, copy=True)
    graph.setdiag(0)
    graph.eliminate_zeros()
    perm, _ = pymetis.nested_dissection(pymetis.CSRAdjacency(graph.indptr, graph.indices))
    return np.asarray(perm, dtype=np.int64)


class CholeskyFactor:
    """Sparse Cholesky factor of an SPD matrix (CHOLMOD through cvxopt).

    Larger systems are ordered by nested dissection.  ``refactor`` reuses the
    ordering and symbolic analysis for a matrix with the same pattern.
    """

    def __init__(self, matrix: sp.spmatrix, order: np.ndarray | None = None):
        self.shape = matrix.shape
        a = self._convert(matrix)
        if order is None and self.shape[0] > ND_THRESHOLD:
            order = nested_dissection(matrix)
        self.order = order
        if order is not None:
            order = cvxopt.matrix(np.asarray(order).tolist())
        with _supernodal():
            self._symbolic = cvxopt.cholmod.symbolic(a, p=order) if order is not None else cvxopt.cholmod.symbolic(a)
        self._lu = None
        self._factor(matrix, a)

    @staticmethod
    def _convert(matrix):
        coo = sp.coo_matrix(matrix)
        return cvxopt.spmatrix(coo.data, coo.row.astype(int), coo.col.astype(int), coo.shape)

    def _factor(self, matrix, a):
        try:
            with _supernodal():
                cvxopt.cholmod.numeric(a, self._symbolic)
            self._lu = None
        except ArithmeticError:
            log.info("Cholesky breakdown, falling back to LU")
            self._lu = spla.splu(sp.csc_matrix(matrix))

    def refactor(self, matrix: sp.spmatrix) -> "CholeskyFactor":
        if matrix.shape != self.shape:
            raise ValueError("matrix shape differs from the analysed one")
        self._factor(matrix, self._convert(matrix))
        return self

    def __call__(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is not None:
            return self._lu.solve(np.asarray(rhs, dtype=float))
        b = cvxopt.matrix(np.array(rhs, dtype=float))
        cvxopt.cholmod.solve(self._symbolic, b)
        return np.array(b).ravel()


class _supernodal:
    def __enter__(self):
        self._old = cvxopt.cholmod.options.get("supernodal")
        cvxopt.cholmod.options["supernodal"] = 2

    def __exit__(self, *exc):
        if self._old is None:
            cvxopt.cholmod.options.pop("supernodal", None)
        else:
            cvxopt.cholmod.options["supernodal"] = self._old


def refined_solve(matrix: sp.spmatrix, rhs: np.ndarray, factor, tol: float) -> tuple[np.ndarray, int]:
    """Solve with a factor, then refine with residuals in extended precision.

    The metric weights of irregular meshes span many decades, so a plain
    double residual stalls well above what the factor can deliver.
    """
    norm_b = np.linalg.norm(rhs)
    x = factor(rhs)
    wide = sp.csr_matrix(matrix).astype(np.longdouble)
    wide_rhs = np.asarray(rhs).astype(np.longdouble)
    steps = 1
    for _ in range(REFINE_STEPS):
        r = (wide_rhs - wide @ x.astype(np.longdouble)).astype(float)
        if np.linalg.norm(r) <= 1e-3 * tol * norm_b:
            break
        x = x + factor(r)
        steps += 1
    return x, steps


def _solve(matrix: sp.csr_matrix, rhs: np.ndarray, tol: float, method: str, x0=None) -> tuple[np.ndarray, int]:
    n = matrix.shape[0]
    if n == 0:
        return np.zeros(0), 0
    norm_b = np.linalg.norm(rhs)
    if norm_b == 0:
        return np.zeros(n), 0
    if method == "auto":
        method = "direct" if n <= DIRECT_LIMIT else "cg"
    if method == "direct":
        return refined_solve(matrix, rhs, CholeskyFactor(matrix), tol)
    count = [0]

    def tick(_):
        count[0] += 1

    if method == "cg":
        # Jacobi preconditioning, i.e. symmetric diagonal scaling
        diag = matrix.diagonal()
        precond = spla.LinearOperator(matrix.shape, matvec=lambda v: v / diag, dtype=float)
        x, info = spla.cg(matrix, rhs, x0=x0, rtol=tol, atol=0.0, maxiter=20 * n, M=precond, callback=tick)
    elif method == "amg":
        ml = pyamg.smoothed_aggregation_solver(matrix, symmetry="symmetric")
        residuals: list[float] = []
        x = ml.solve(rhs, x0=x0, tol=tol, accel="cg", maxiter=500, residuals=residuals)
        count[0] = len(residuals)
        info = 0
    else:
        raise ValueError(f"unknown solver {method!r}")
    if info < 0:
        raise SolverDivergence(f"{method} failed with code {info}")
    return x, count[0]


def cluster_basis(fc: FormanComplex, alpha: np.ndarray, free: np.ndarray, fixed: np.ndarray,
                  split: float = CONTRAST_SPLIT) -> sp.csr_matrix | None:
    """Change of unknowns that isolates floating high-diffusivity clusters.

    With a large contrast, a cluster of high-alpha K-edges that touches no
    Dirichlet node is held in place only by low-alpha edges.  Its common
    potential then lives in a near-null space that elimination destroys by
    cancellation.  The returned T (free x free) replaces the potential of one
    root node per such cluster by the cluster potential, so u_free = T y and
    the high-alpha edges inside a cluster no longer see that unknown.
    Returns None when the contrast is below ``split`` or nothing floats.
    """
    alpha = np.asarray(alpha, dtype=float)
    lo, hi = alpha.min(), alpha.max()
    if hi < split * lo:
        return None
    strong = alpha >= np.sqrt(lo * hi)
    n = fc.n_kcells(0)
    ends = fc.corners(1)[strong]
    graph = sp.coo_matrix((np.ones(len(ends)), (ends[:, 0], ends[:, 1])), shape=(n, n))
    n_comp, label = connected_components(graph, directed=False)
    anchored = np.zeros(n_comp, dtype=bool)
    anchored[label[fixed]] = True
    size = np.bincount(label, minlength=n_comp)
    floating = free[~anchored[label[free]] & (size[label[free]] > 1)]
    if floating.size == 0:
        return None
    _, first = np.unique(label[floating], return_index=True)
    root = np.full(n_comp, -1)
    root[label[floating[first]]] = floating[first]
    members = floating[root[label[floating]] != floating]
    pos = np.full(n, -1)
    pos[free] = np.arange(len(free))
    m = len(free)
    rows = np.concatenate([np.arange(m), pos[members]])
    cols = np.concatenate([np.arange(m), pos[root[label[members]]]])
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))


def clustered_matrix(delta_free: sp.csr_matrix, w: np.ndarray, basis: sp.csr_matrix) -> sp.csc_matrix:
    """basis^T S basis assembled from edge differences, so nothing cancels."""
    d = (delta_free @ basis).tocsr()
    d.eliminate_zeros()
    return (d.T @ sp.diags(w) @ d).tocsc()


def solve_steady(reduced: ReducedSystem, tol: float = 1e-10, method: str = "auto", x0=None) -> SteadySolution:
    """Solve the reduced system to relative residual tol.

    High-contrast systems are solved in the cluster basis; the reported
    residual is that of the system actually solved.
    """
    system = reduced.system
    basis = cluster_basis(system.mc.fc, system.da.alpha, reduced.free, reduced.fixed)
    matrix, rhs = reduced.matrix, reduced.rhs
    if basis is not None:
        delta_free = system.mc.coboundary(0).tocsc()[:, reduced.free].tocsr()
        matrix = clustered_matrix(delta_free, system.da.alpha * system.mc.weights[1], basis)
        rhs = basis.T @ rhs
        x0 = None
    x, its = _solve(matrix, rhs, tol, method, x0)
    norm_b = np.linalg.norm(rhs)
    res = float(np.linalg.norm(rhs - matrix @ x) / norm_b) if norm_b > 0 else 0.0
    if not np.isfinite(res) or res > tol * 10:
        raise SolverDivergence(f"relative residual {res:.3e} above tolerance {tol:.1e}")
    if basis is not None:
        x = basis @ x
    u = reduced.expand(x)
    fluxes = {name: boundary_flux(system.mc, system.da, u, nodes)
              for name, nodes in reduced.bc.surfaces.items()}
    return SteadySolution(u, res, its, fluxes)


def step_transient(reduced: ReducedSystem, u: np.ndarray, dt: float, tol: float = 1e-12,
                   method: str = "auto") -> np.ndarray:
    """One backward Euler step of W0 du/dt = -S u with the reduced boundary data."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    mass = reduced.system.mass[reduced.free]
    lhs = (sp.diags(mass) + dt * reduced.matrix).tocsr()
    rhs = mass * u[reduced.free] + dt * reduced.rhs
    x, _ = _solve(lhs, rhs, tol, method, x0=u[reduced.free])
    return reduced.expand(x)


# -- fluxes ------------------------------------------------------------------

def edge_fluxes(mc: MetricContext, da: DiffusivityAssignment, u: np.ndarray) -> np.ndarray:
    """f = -alpha W1 delta0 u on every K-edge."""
    return -da.alpha * mc.weights[1] * (mc.coboundary(0) @ u)


def edge_flux(mc: MetricContext, da: DiffusivityAssignment, u: np.ndarray, edge: int) -> float:
    return float(edge_fluxes(mc, da, u)[edge])


def _crossing_edges(fc: FormanComplex, surface) -> np.ndarray:
    ends = fc.corners(1)
    on = np.zeros(fc.n_kcells(0), dtype=bool)
    on[np.asarray(surface, dtype=np.int64)] = True
    return on[ends[:, 0]] != on[ends[:, 1]]


def boundary_flux(mc: MetricContext, da: DiffusivityAssignment, u: np.ndarray, surface) -> float:
    """Sum of |f| over K-edges joining a surface node to a node off the surface."""
    cross = _crossing_edges(mc.fc, surface)
    return float(np.abs(edge_fluxes(mc, da, u)[cross]).sum())


def boundary_flux_by_class(mc: MetricContext, da: DiffusivityAssignment, u: np.ndarray, surface) -> dict[EdgeClass, float]:
    cross = _crossing_edges(mc.fc, surface)
    f = np.abs(edge_fluxes(mc, da, u))
    classes = classify_edges(mc.fc)
    return {cls: float(f[cross & (classes == cls)].sum()) for cls in EdgeClass if cls <= mc.dim}


def effective_diffusivity(flux: float, length: float, area: float, u0: float, u1: float) -> float:
    """alpha_eff = F h / ((u1 - u0) A)."""
    if length <= 0 or area <= 0 or not u1 > u0:
        raise InvalidGeometry("need positive length and area and u1 > u0")
    return flux * length / ((u1 - u0) * area)


def plane_nodes(fc: FormanComplex, axis: int, value: float, tol: float = PLANE_TOL) -> np.ndarray:
    """K-nodes whose M-cell lies entirely in the plane x[axis] = value."""
    mesh = fc.m.mesh
    limit = tol * mesh.scale
    coord = mesh.vertices[:, axis]
    hits = []
    for p in range(mesh.dim + 1):
        rel = mesh.face_relation(0, p).tocsc()
        dev = np.abs(coord[rel.indices] - value)
        worst = np.zeros(mesh.n_cells(p))
        counts = np.diff(rel.indptr)
        cols = np.repeat(np.arange(mesh.n_cells(p)), counts)
        np.maximum.at(worst, cols, dev)
        hits.append(np.flatnonzero(worst <= limit) + fc.offsets[p])
    return np.concatenate(hits)


# -- slab experiment -----------------------------------------------------------

@dataclass
class SlabResult:
    u: np.ndarray
    flux_low: float
    flux_high: float
    breakdown_low: dict[EdgeClass, float]
    breakdown_high: dict[EdgeClass, float]
    alpha_eff: float
    residual: float


def slab_conditions(fc: FormanComplex, axis: int = -1, u_low: float = 0.0, u_high: float = 1.0) -> BoundaryConditionSet:
    """Fixed values on the two bounding planes normal to ``axis``."""
    mesh = fc.m.mesh
    axis = axis % mesh.embedding_dim
    lo, hi = mesh.vertices[:, axis].min(), mesh.vertices[:, axis].max()
    low, high = plane_nodes(fc, axis, lo), plane_nodes(fc, axis, hi)
    dirichlet = {int(i): u_low for i in low}
    dirichlet.update({int(i): u_high for i in high})
    return BoundaryConditionSet(dirichlet, {}, {"low": low, "high": high})


def run_slab(mc: MetricContext, da: DiffusivityAssignment, axis: int = -1, u_low: float = 0.0,
             u_high: float = 1.0, tol: float = 1e-10, method: str = "auto") -> SlabResult:
    """Steady run between two opposite faces of a box domain, other faces insulated."""
    fc = mc.fc
    mesh = fc.m.mesh
    axis = axis % mesh.embedding_dim
    bc = slab_conditions(fc, axis, u_low, u_high)
    reduced = apply_boundary_conditions(diffusion_system(mc, da), bc)
    sol = solve_steady(reduced, tol=tol, method=method)
    ext = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)
    length = ext[axis]
    area = float(np.prod(np.delete(ext, axis))) if mesh.embedding_dim > 1 else 1.0
    low, high = bc.surfaces["low"], bc.surfaces["high"]
    f_low, f_high = sol.boundary_flux["low"], sol.boundary_flux["high"]
    return SlabResult(sol.u, f_low, f_high,
                      boundary_flux_by_class(mc, da, sol.u, low), boundary_flux_by_class(mc, da, sol.u, high),
                      effective_diffusivity(f_low, length, area, u_low, u_high), sol.residual)
