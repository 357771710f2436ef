"""Monte Carlo percolation of conductive inclusions in an insulating matrix.

GNP inclusions occupy M-faces together with their boundary edges; CNT
inclusions occupy M-edges.  Each Monte Carlo path adds randomly ordered
inclusions one fraction at a time and records the effective diffusivity of
the slab between the two faces normal to an axis.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .diffusion import (ND_THRESHOLD, CholeskyFactor, DiffusivityAssignment, clustered_matrix, classify_edges,
                        cluster_basis, effective_diffusivity, nested_dissection, refined_solve,
                        slab_conditions)
from .errors import ConfigError, DimensionMismatch, FormDiffError, SolverDivergence
from .forman import FormanComplex, forman_subdivide
from .io import write_csv
from .mesh import CellId, Mesh
from .metric import MetricContext, build_metric
from .orientation import orient_compatibly

log = logging.getLogger(__name__)

KIND_DIMENSION = {"GNP": 2, "CNT": 1}
DEFAULT_FRACTIONS = tuple(np.linspace(0.0, 1.0, 51))


@dataclass(frozen=True)
class InclusionStudy:
    kind: str
    matrix_alpha: float = 1e-10
    inclusion_alpha: float = 1.0
    fractions: Sequence[float] = DEFAULT_FRACTIONS
    paths: int = 200
    seed: int = 0
    axis: int = -1
    tol: float = 1e-10

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in KIND_DIMENSION:
            raise ConfigError(f"inclusion kind must be GNP or CNT, got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        fr = np.asarray(self.fractions, dtype=float)
        if fr.ndim != 1 or fr.size == 0 or np.any(np.diff(fr) < 0) or fr.min() < 0 or fr.max() > 1:
            raise ConfigError("fractions must be a non-empty ascending sequence in [0, 1]")
        object.__setattr__(self, "fractions", tuple(float(f) for f in fr))
        if self.paths < 1:
            raise ConfigError("at least one Monte Carlo path is needed")
        if not 0 < self.matrix_alpha <= self.inclusion_alpha:
            raise ConfigError("need 0 < matrix_alpha <= inclusion_alpha")

    @property
    def cell_dim(self) -> int:
        return KIND_DIMENSION[self.kind]


def covered_kedges(fc: FormanComplex, kind: str) -> sp.csr_matrix:
    """Boolean (candidate M-cells x K-edges) matrix of the K-edges each inclusion covers."""
    kind = kind.upper()
    dim = KIND_DIMENSION[kind]
    mesh = fc.m.mesh
    if mesh.dim < dim:
        raise DimensionMismatch(f"{kind} inclusions need a mesh of dimension >= {dim}")
    pairs = fc.pairs(1)
    top_dim = fc.gid_dims(pairs[:, 0])
    n_e = fc.n_kcells(1)
    # K-edges (b_{p-1} < a_p) indexed by the M-cell a_p that contains them
    own = {}
    for p in (1, 2):
        sel = np.flatnonzero(top_dim == p)
        own[p] = sp.csr_matrix((np.ones(len(sel)), (pairs[sel, 0] - fc.offsets[p], sel)),
                               shape=(mesh.n_cells(p), n_e))
    if dim == 1:
        cover = own[1]
    else:
        edges_of_face = mesh.face_relation(1, 2).T.tocsr().astype(float)
        cover = own[2] + edges_of_face @ own[1]
    cover = cover.tocsr()
    cover.data[:] = 1.0
    return cover


def _selection_indices(selected: Iterable, dim: int) -> np.ndarray:
    out = []
    for item in selected:
        if isinstance(item, tuple):
            c = CellId(*item)
            if c.dim != dim:
                raise DimensionMismatch(f"{c} is not a {dim}-cell")
            out.append(c.index)
        else:
            out.append(int(item))
    return np.asarray(out, dtype=np.int64)


def assign_inclusions(fc: FormanComplex, kind: str, selected: Iterable, matrix_alpha: float = 1e-10,
                      inclusion_alpha: float = 1.0) -> DiffusivityAssignment:
    """Matrix diffusivity everywhere, raised on the K-edges of the selected cells.

    ``selected`` holds CellIds or plain indices of cells of the kind's
    dimension (2 for GNP, 1 for CNT).  Overlapping inclusions take the maximum.
    """
    kind = kind.upper()
    if kind not in KIND_DIMENSION:
        raise ConfigError(f"unknown inclusion kind {kind!r}")
    dim = KIND_DIMENSION[kind]
    cover = covered_kedges(fc, kind)
    idx = _selection_indices(selected, dim)
    if idx.size and (idx.min() < 0 or idx.max() >= cover.shape[0]):
        raise DimensionMismatch(f"selected index out of range for {dim}-cells")
    alpha = np.full(fc.n_kcells(1), float(matrix_alpha))
    hit = np.asarray(cover[idx].sum(axis=0)).ravel() > 0 if idx.size else np.zeros(len(alpha), bool)
    alpha[hit] = max(float(inclusion_alpha), float(matrix_alpha))
    return DiffusivityAssignment(alpha, fc.pairs(1)[:, 0].copy())


class SlabProblem:
    """Slab experiment prepared for many solves with different diffusivities.

    The Dirichlet reduction and the Cholesky ordering are computed once; each
    solve only assembles and factors numerically.
    """

    def __init__(self, mc: MetricContext, axis: int = -1, u_low: float = 0.0, u_high: float = 1.0):
        fc = mc.fc
        mesh = fc.m.mesh
        axis = axis % mesh.embedding_dim
        bc = slab_conditions(fc, axis, u_low, u_high)
        delta = mc.coboundary(0).tocsc()
        fixed = np.array(sorted(bc.dirichlet), dtype=np.int64)
        values = np.array([bc.dirichlet[i] for i in fixed])
        free = np.setdiff1d(np.arange(fc.n_kcells(0)), fixed)
        self.mc = mc
        self.free, self.fixed, self.values = free, fixed, values
        self.delta_free = delta[:, free].tocsr()
        self.lifted = delta[:, fixed] @ values   # delta of the boundary data
        self.u_low, self.u_high = u_low, u_high
        ext = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)
        self.length = float(ext[axis])
        self.area = float(np.prod(np.delete(ext, axis))) if mesh.embedding_dim > 1 else 1.0
        self._factor: CholeskyFactor | None = None
        self._order: np.ndarray | None = None

    def _system(self, alpha: np.ndarray):
        w = alpha * self.mc.weights[1]
        basis = cluster_basis(self.mc.fc, alpha, self.free, self.fixed)
        d = self.delta_free
        rhs = -(d.T @ (w * self.lifted))
        if basis is None:
            return (d.T @ sp.diags(w) @ d).tocsc(), rhs, w, None
        return clustered_matrix(d, w, basis), basis.T @ rhs, w, basis

    def _factorise(self, matrix, basis) -> CholeskyFactor:
        # the plain pattern never changes: keep its symbolic analysis
        if basis is None:
            if self._factor is None:
                self._factor = CholeskyFactor(matrix, self._order)
                self._order = self._factor.order
                return self._factor
            return self._factor.refactor(matrix)
        if self._order is None and matrix.shape[0] > ND_THRESHOLD:
            self._order = nested_dissection((self.delta_free.T @ self.delta_free).tocsr())
        if self._order is None:
            return CholeskyFactor(matrix)
        # cluster roots couple to the whole rim of their cluster; eliminating
        # them last keeps their dense rows from spreading fill
        coo = basis.tocoo()
        roots = np.zeros(matrix.shape[0], dtype=bool)
        roots[coo.col[coo.row != coo.col]] = True
        return CholeskyFactor(matrix, np.concatenate([self._order[~roots[self._order]], np.flatnonzero(roots)]))

    def solve(self, alpha: np.ndarray, tol: float = 1e-10) -> tuple[float, np.ndarray]:
        """Effective diffusivity and nodal values for one assignment.

        The total flux is taken from the dissipated energy, which equals the
        flux through either face times the potential gap at the solution and
        is insensitive to the diffusivity contrast.
        """
        matrix, rhs, w, basis = self._system(np.asarray(alpha, dtype=float))
        factor = self._factorise(matrix, basis)
        y, _ = refined_solve(matrix, rhs, factor, tol)
        norm_b = np.linalg.norm(rhs)
        res = float(np.linalg.norm(rhs - matrix @ y) / norm_b) if norm_b > 0 else 0.0
        if not np.isfinite(res) or res > 10 * tol:
            raise SolverDivergence(f"relative residual {res:.3e} above tolerance {tol:.1e}")
        x = y if basis is None else basis @ y
        grad = self.delta_free @ x + self.lifted
        gap = self.u_high - self.u_low
        flux = float(np.sum(w * grad ** 2)) / gap
        u = np.empty(len(self.free) + len(self.fixed))
        u[self.free] = x
        u[self.fixed] = self.values
        return effective_diffusivity(flux, self.length, self.area, self.u_low, self.u_high), u


@dataclass
class PercolationCurve:
    kind: str
    fractions: np.ndarray
    samples: np.ndarray                # (paths, fractions) alpha_eff, nan where the solve failed
    measures: np.ndarray               # (paths, fractions) cumulative inclusion measure
    baseline: float                    # alpha_eff of the bare matrix
    failures: list[tuple[int, int, str]] = field(default_factory=list)

    @property
    def mean_alpha_eff(self) -> np.ndarray:
        return _nan_stat(np.nanmean, self.samples)

    @property
    def std_alpha_eff(self) -> np.ndarray:
        return _nan_stat(np.nanstd, self.samples)

    @property
    def cumulative_measure(self) -> np.ndarray:
        return self.measures.mean(axis=0)

    @property
    def n_failed(self) -> np.ndarray:
        return np.isnan(self.samples).sum(axis=0)

    def steepest_rise(self) -> tuple[float, float]:
        """(fraction, cumulative measure) in the middle of the steepest step.

        Steepness is measured on log10 of the mean curve, which spans the
        many decades between matrix and inclusion diffusivity.
        """
        mean = np.log10(self.mean_alpha_eff)
        slope = np.diff(mean) / np.diff(self.fractions)
        k = int(np.nanargmax(slope))
        mid = lambda a: 0.5 * (a[k] + a[k + 1])
        return float(mid(self.fractions)), float(mid(self.cumulative_measure))

    def rows(self):
        for f, m, a, s, n in zip(self.fractions, self.cumulative_measure, self.mean_alpha_eff,
                                 self.std_alpha_eff, self.n_failed):
            yield [f"{f:.6g}", f"{m:.12g}", f"{a:.12g}", f"{s:.12g}", int(n)]

    def write_csv(self, path) -> None:
        write_csv(path, ["fraction", "cumulative_measure", "mean_alpha_eff", "std", "n_failed"], self.rows())


def _nan_stat(fn, a: np.ndarray) -> np.ndarray:
    out = np.full(a.shape[1], np.nan)
    ok = ~np.all(np.isnan(a), axis=0)
    out[ok] = fn(a[:, ok], axis=0)
    return out


def path_generator(seed: int, path: int) -> np.random.Generator:
    """Counter-based stream for one Monte Carlo path."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(path)])))


def _first_cover_rank(cover: sp.csr_matrix, order: np.ndarray) -> np.ndarray:
    """For each K-edge, the position in ``order`` of the first inclusion covering it."""
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order))
    coo = cover.tocoo()
    first = np.full(cover.shape[1], np.iinfo(np.int64).max)
    np.minimum.at(first, coo.col, rank[coo.row])
    return first


def prepare(mesh_or_metric, curvature_mode: str = "curvature") -> MetricContext:
    if isinstance(mesh_or_metric, MetricContext):
        return mesh_or_metric
    if isinstance(mesh_or_metric, FormanComplex):
        return build_metric(mesh_or_metric, curvature_mode)
    if isinstance(mesh_or_metric, Mesh):
        return build_metric(forman_subdivide(orient_compatibly(mesh_or_metric)), curvature_mode)
    raise TypeError("expected a Mesh, FormanComplex or MetricContext")


def percolation_sweep(study: InclusionStudy, mesh, curvature_mode: str = "curvature") -> PercolationCurve:
    """Run every Monte Carlo path of a study on a mesh (or prepared metric)."""
    mc = prepare(mesh, curvature_mode)
    fc = mc.fc
    cover = covered_kedges(fc, study.kind)
    n_cand = cover.shape[0]
    cell_measure = fc.m.mesh.measures(study.cell_dim)
    problem = SlabProblem(mc, study.axis)
    fractions = np.asarray(study.fractions)
    counts = np.rint(fractions * n_cand).astype(np.int64)
    baseline, _ = problem.solve(np.full(fc.n_kcells(1), study.matrix_alpha), study.tol)
    samples = np.full((study.paths, len(fractions)), np.nan)
    measures = np.zeros_like(samples)
    failures = []
    # no inclusions or all of them: the same assignment on every path
    shared: dict[int, float | FormDiffError] = {0: baseline}

    def sample(count, first):
        if count in shared:
            value = shared[count]
        else:
            alpha = np.where(first < count, study.inclusion_alpha, study.matrix_alpha)
            try:
                value = problem.solve(alpha, study.tol)[0]
            except FormDiffError as exc:
                value = exc
            if count == n_cand:
                shared[count] = value
        if isinstance(value, FormDiffError):
            raise value
        return value

    start = time.perf_counter()
    for path in range(study.paths):
        order = path_generator(study.seed, path).permutation(n_cand)
        first = _first_cover_rank(cover, order)
        cum = np.concatenate([[0.0], np.cumsum(cell_measure[order])])
        for j, count in enumerate(counts):
            measures[path, j] = cum[count]
            try:
                samples[path, j] = sample(count, first)
            except FormDiffError as exc:
                failures.append((path, j, str(exc)))
                log.warning("path %d fraction %.4g failed: %s", path, fractions[j], exc)
        log.info("%s path %d/%d done, %.1f s", study.kind, path + 1, study.paths, time.perf_counter() - start)
    return PercolationCurve(study.kind, fractions, samples, measures, baseline, failures)


def classes_overridden(fc: FormanComplex, da: DiffusivityAssignment, matrix_alpha: float) -> dict[int, int]:
    """Number of K-edges per edge class whose alpha differs from the matrix value."""
    classes = classify_edges(fc)
    raised = da.alpha != matrix_alpha
    return {int(c): int(np.sum(raised & (classes == c))) for c in np.unique(classes)}
