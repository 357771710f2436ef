"""Metric weights, inner products and the Hodge operators on K."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .algebra import cup, cup_table, fundamental_chain
from .errors import DegreeMismatch
from .forman import FormanComplex
from .orientation import Cochain, betti_numbers, evaluate

log = logging.getLogger(__name__)

KERNEL_TOL = 1e-9


class MetricContext:
    """Diagonal inner products on K-cochains.

    ``weights[p][c]`` is <c^p, c^p>.  With node weight w(b) = kappa(b) V(b),
    where V(b) is the total measure of the top K-cells at b, a p-cell c gets
    sum of w over its corners / (2^(p+d) mu(c)^2).
    """

    def __init__(self, fc: FormanComplex, curvature_mode: str = "curvature"):
        if curvature_mode not in ("curvature", "trivial"):
            raise ValueError(f"unknown curvature mode {curvature_mode!r}")
        self.fc = fc
        d = fc.dim
        mesh = fc.m.mesh
        if curvature_mode == "curvature" and mesh.embedding_dim > d:
            log.warning("mesh is embedded in a higher dimension; using kappa = 1")
            curvature_mode = "trivial"
        self.curvature_mode = curvature_mode
        if curvature_mode == "curvature":
            self.kappa = fc.node_curvatures()
        else:
            self.kappa = np.ones(fc.n_kcells(0))
        mu_top = fc.kcell_measures(d)
        corners = fc.corners(d)
        self.node_volume = np.bincount(corners.ravel(), weights=np.repeat(mu_top, corners.shape[1]),
                                       minlength=fc.n_kcells(0))
        self.vol = Cochain(d, mu_top.copy())
        node_weight = self.kappa * self.node_volume
        self.weights = []
        for p in range(d + 1):
            mu = fc.kcell_measures(p)
            total = node_weight[fc.corners(p)].sum(axis=1)
            self.weights.append(total / (2.0 ** (p + d) * mu ** 2))

    @property
    def dim(self) -> int:
        return self.fc.dim

    def coboundary(self, p: int) -> sp.csr_matrix:
        return self.fc.k.coboundary(p).astype(float)

    def adjoint_matrix(self, p: int) -> sp.csr_matrix:
        """delta*_p: (p)-cochains to (p-1)-cochains, W_{p-1}^-1 delta^T W_p."""
        delta = self.coboundary(p - 1)
        return (sp.diags(1.0 / self.weights[p - 1]) @ delta.T @ sp.diags(self.weights[p])).tocsr()

    def laplacian_matrix(self, p: int) -> sp.csr_matrix:
        d = self.dim
        n = self.fc.n_kcells(p)
        lap = sp.csr_matrix((n, n))
        if p > 0:
            lap = lap + self.coboundary(p - 1) @ self.adjoint_matrix(p)
        if p < d:
            lap = lap + self.adjoint_matrix(p + 1) @ self.coboundary(p)
        return lap.tocsr()


def build_metric(fc: FormanComplex, curvature_mode: str = "curvature") -> MetricContext:
    return MetricContext(fc, curvature_mode)


def inner_product(mc: MetricContext, sigma: Cochain, tau: Cochain) -> float:
    if sigma.dim != tau.dim:
        raise DegreeMismatch(f"degrees {sigma.dim} and {tau.dim} differ")
    return float(np.sum(sigma.coefficients * tau.coefficients * mc.weights[sigma.dim]))


def adjoint_coboundary(mc: MetricContext, tau: Cochain) -> Cochain:
    if tau.dim == 0:
        raise DegreeMismatch("no adjoint coboundary on 0-cochains")
    return Cochain(tau.dim - 1, mc.adjoint_matrix(tau.dim) @ tau.coefficients)


def laplacian(mc: MetricContext, p: int) -> sp.csr_matrix:
    """Hodge Laplacian delta delta* + delta* delta on p-cochains."""
    return mc.laplacian_matrix(p)


def laplacian_0(mc: MetricContext, c0: Cochain) -> Cochain:
    if c0.dim != 0:
        raise DegreeMismatch("laplacian_0 acts on 0-cochains")
    return Cochain(0, mc.laplacian_matrix(0) @ c0.coefficients)


def riemann_integral(mc: MetricContext, f: Cochain) -> float:
    """(f cup vol)[K]."""
    if f.dim != 0:
        raise DegreeMismatch("only 0-cochains are integrated")
    return evaluate(cup(mc.fc, f, mc.vol), fundamental_chain(mc.fc))


def hodge_star_matrix(mc: MetricContext, p: int) -> sp.csr_matrix:
    """Matrix of the Hodge star from p-cochains to (d-p)-cochains."""
    d = mc.dim
    a, b, _, coef = cup_table(mc.fc).entries(d - p, p)
    n_out, n_in = mc.fc.n_kcells(d - p), mc.fc.n_kcells(p)
    pairing = sp.csr_matrix((coef, (a, b)), shape=(n_out, n_in))
    return (sp.diags(1.0 / mc.weights[d - p]) @ pairing).tocsr()


def hodge_star(mc: MetricContext, sigma: Cochain) -> Cochain:
    return Cochain(mc.dim - sigma.dim, hodge_star_matrix(mc, sigma.dim) @ sigma.coefficients)


# -- Hodge theory checks -------------------------------------------------

def harmonic_basis(mc: MetricContext, p: int, tol: float = KERNEL_TOL) -> np.ndarray:
    """Columns span Ker Laplacian_p and are orthonormal for the inner product."""
    w = mc.weights[p]
    root = np.sqrt(w)
    sym = (sp.diags(w) @ mc.laplacian_matrix(p)).toarray()
    sym = 0.5 * (sym + sym.T) / root[:, None] / root[None, :]
    vals, vecs = np.linalg.eigh(sym)
    top = max(abs(vals).max(), 1e-300)
    keep = vals < tol * top
    return vecs[:, keep] / root[:, None]


def _weighted_lstsq(w: np.ndarray, basis: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Projection of target onto the column span of basis in the w-inner product."""
    if basis.shape[1] == 0:
        return np.zeros_like(target)
    root = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(basis * root[:, None], target * root, rcond=None)
    return basis @ coef


@dataclass
class HodgeReport:
    kernel_dims: list[int]
    betti: tuple[int, ...]
    residuals: list[float] = field(default_factory=list)
    orthogonality: list[float] = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        return tuple(self.kernel_dims) == tuple(self.betti)


def hodge_decomposition(mc: MetricContext, sigma: Cochain):
    """Split sigma into exact, harmonic and coexact parts by three projections."""
    p = sigma.dim
    w = mc.weights[p]
    s = sigma.coefficients
    exact = np.zeros_like(s)
    coexact = np.zeros_like(s)
    if p > 0:
        exact = _weighted_lstsq(w, mc.coboundary(p - 1).toarray(), s)
    if p < mc.dim:
        coexact = _weighted_lstsq(w, mc.adjoint_matrix(p + 1).toarray(), s)
    h = harmonic_basis(mc, p)
    harmonic = h @ (h.T @ (w * s))
    return exact, harmonic, coexact


def hodge_report(mc: MetricContext, seed: int = 0) -> HodgeReport:
    rng = np.random.default_rng(seed)
    kernel_dims, residuals, ortho = [], [], []
    for p in range(mc.dim + 1):
        kernel_dims.append(harmonic_basis(mc, p).shape[1])
        sigma = Cochain(p, rng.standard_normal(mc.fc.n_kcells(p)))
        parts = hodge_decomposition(mc, sigma)
        w = mc.weights[p]
        norm = np.sqrt(np.sum(w * sigma.coefficients ** 2))
        rest = sigma.coefficients - sum(parts)
        residuals.append(float(np.sqrt(np.sum(w * rest ** 2)) / norm))
        cross = max(abs(np.sum(w * parts[i] * parts[j])) for i in range(3) for j in range(i + 1, 3))
        ortho.append(float(cross / norm ** 2))
    return HodgeReport(kernel_dims, betti_numbers(mc.fc.m), residuals, ortho)
