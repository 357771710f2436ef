"""Orientations, signed boundary operators, chains and homology."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DegreeMismatch, NonOrientable, NotHyperface, NumericallyDegenerate
from .mesh import CellId, Mesh, as_cell, boundary_cells

RANK_TOL = 1e-9
DET_TOL = 1e-10


@dataclass(frozen=True)
class Chain:
    dim: int
    coefficients: np.ndarray

    def __len__(self) -> int:
        return len(self.coefficients)


@dataclass(frozen=True)
class Cochain:
    dim: int
    coefficients: np.ndarray

    def __len__(self) -> int:
        return len(self.coefficients)

    def _check(self, other: "Cochain") -> None:
        if other.dim != self.dim:
            raise DegreeMismatch(f"degrees {self.dim} and {other.dim} differ")

    def __add__(self, other: "Cochain") -> "Cochain":
        self._check(other)
        return Cochain(self.dim, self.coefficients + other.coefficients)

    def __sub__(self, other: "Cochain") -> "Cochain":
        self._check(other)
        return Cochain(self.dim, self.coefficients - other.coefficients)

    def __neg__(self) -> "Cochain":
        return Cochain(self.dim, -self.coefficients)

    def __mul__(self, scalar: float) -> "Cochain":
        return Cochain(self.dim, scalar * self.coefficients)

    __rmul__ = __mul__


def evaluate(sigma: Cochain, rho: Chain) -> float:
    """Pair a cochain with a chain of the same degree."""
    if sigma.dim != rho.dim:
        raise DegreeMismatch(f"cochain of degree {sigma.dim} on a {rho.dim}-chain")
    return float(np.dot(sigma.coefficients, rho.coefficients))


# -- frames --------------------------------------------------------------

def cell_frames(mesh: Mesh, p: int) -> np.ndarray:
    """Reference frame of every p-cell, shape (n_p, p, embedding_dim).

    The frame is made of edge vectors from the lowest-index vertex to the
    following vertices (in index order) that increase the spanned dimension.
    """
    x = mesh.vertices
    n = mesh.n_cells(p)
    e = mesh.embedding_dim
    if p == 0:
        return np.zeros((n, 0, e))
    if p == 1:
        ends = np.sort(mesh.edge_endpoints(), axis=1)
        return (x[ends[:, 1]] - x[ends[:, 0]])[:, None, :]
    rel = mesh.face_relation(0, p).tocsc()
    rel.sort_indices()
    tol = 1e-8 * mesh.scale
    frames = np.zeros((n, p, e))
    for c in range(n):
        verts = rel.indices[rel.indptr[c]:rel.indptr[c + 1]]
        diffs = x[verts[1:]] - x[verts[0]]
        basis: list[np.ndarray] = []
        k = 0
        for vec in diffs:
            r = vec.copy()
            for q in basis:
                r -= np.dot(r, q) * q
            norm = np.linalg.norm(r)
            if norm > tol:
                basis.append(r / norm)
                frames[c, k] = vec
                k += 1
                if k == p:
                    break
        if k < p:
            raise NumericallyDegenerate(f"{p}-cell {c} does not span {p} dimensions")
    return frames


def geometric_incidence(mesh: Mesh, p: int, frames_hi: np.ndarray, frames_lo: np.ndarray) -> sp.csc_matrix:
    """Relative orientations of p-cells and their hyperfaces under +1 frames.

    Entry (b, c) is the sign of [n, OR(b)] / OR(c), where n points from the
    centroid of c towards the centroid of b.  Components of n along b's frame
    and outside c's affine hull do not change the sign, so the determinant of
    the Gram matrix between c's frame and [n, b's frame] is used directly.
    """
    inc = mesh.incidence(p).tocsc()
    inc.sort_indices()
    cols = np.repeat(np.arange(inc.shape[1]), np.diff(inc.indptr))
    rows = inc.indices.astype(np.int64)
    normal = mesh.centroids(p - 1)[rows] - mesh.centroids(p)[cols]
    lower = np.concatenate([normal[:, None, :], frames_lo[rows]], axis=1)
    upper = frames_hi[cols]
    gram = np.einsum("mie,mje->mij", upper, lower)
    det = np.linalg.det(gram)
    scale = np.prod(np.linalg.norm(upper, axis=2), axis=1) * np.prod(np.linalg.norm(lower, axis=2), axis=1)
    weak = np.abs(det) < DET_TOL * scale
    if np.any(weak):
        k = np.flatnonzero(weak)[0]
        raise NumericallyDegenerate(f"orientation of {p}-cell {cols[k]} against {p - 1}-cell {rows[k]} is degenerate")
    return sp.csc_matrix((np.sign(det).astype(np.int64), (rows, cols)), shape=inc.shape)


# -- oriented complexes ---------------------------------------------------

class OrientedComplex:
    """A mesh with per-cell orientation signs and signed boundary matrices.

    ``signs[p][i]`` is +1 when p-cell i carries its reference frame and -1
    when it carries the opposite orientation.  ``boundary(p)`` has entries
    eps(c_p, b_{p-1}) at (b, c).
    """

    def __init__(self, mesh: Mesh, signs: Sequence[np.ndarray], boundaries: Sequence[sp.spmatrix | None]):
        self.mesh = mesh
        self.signs = tuple(np.asarray(s, dtype=np.int64) for s in signs)
        self._boundaries = [None] + [sp.csr_matrix(b, dtype=np.int64) for b in boundaries[1:]]

    @property
    def dim(self) -> int:
        return self.mesh.dim

    def boundary(self, p: int) -> sp.csr_matrix:
        """Signed boundary operator from p-chains to (p-1)-chains."""
        if p < 1 or p > self.dim:
            rows = self.mesh.n_cells(p - 1) if p >= 1 else 0
            cols = self.mesh.n_cells(p) if 0 <= p <= self.dim else 0
            return sp.csr_matrix((rows, cols), dtype=np.int64)
        return self._boundaries[p]

    def coboundary(self, p: int) -> sp.csr_matrix:
        """delta^p = transpose of the boundary of (p+1)-chains."""
        return self.boundary(p + 1).T.tocsr()

    def relative_orientation(self, c, b) -> int:
        c, b = as_cell(c), as_cell(b)
        if b.dim != c.dim - 1:
            raise NotHyperface(f"{b} is not a hyperface of {c}")
        value = int(self.boundary(c.dim)[b.index, c.index])
        if value == 0:
            raise NotHyperface(f"{b} is not a hyperface of {c}")
        return value


def relative_orientation(oc: OrientedComplex, c, b) -> int:
    return oc.relative_orientation(c, b)


def oriented_complex(mesh: Mesh, signs: Sequence[np.ndarray]) -> OrientedComplex:
    """Oriented complex with the given per-dimension orientation signs."""
    frames = [cell_frames(mesh, p) for p in range(mesh.dim + 1)]
    boundaries: list[sp.spmatrix | None] = [None]
    for p in range(1, mesh.dim + 1):
        geo = geometric_incidence(mesh, p, frames[p], frames[p - 1])
        boundaries.append(sp.diags(signs[p - 1]) @ geo @ sp.diags(signs[p]))
    return OrientedComplex(mesh, signs, boundaries)


def orient_compatibly(mesh: Mesh, overrides: Mapping[CellId, int] | None = None) -> OrientedComplex:
    """Compatible orientation of a manifold-like mesh.

    Top cells are oriented by breadth-first propagation across interior
    (d-1)-cells, each component rooted at its lowest-index cell (right-handed
    when d equals the embedding dimension).  Boundary (d-1)-cells receive the
    orientation induced by their top cell.  All other cells use their
    reference frame, unless flipped through ``overrides``.
    """
    d = mesh.dim
    frames = [cell_frames(mesh, p) for p in range(d + 1)]
    signs = [np.ones(mesh.n_cells(p), dtype=np.int64) for p in range(d + 1)]
    if d == 0:
        return OrientedComplex(mesh, signs, [None])
    geo = [None] + [geometric_incidence(mesh, p, frames[p], frames[p - 1]) for p in range(1, d + 1)]
    top = geo[d].tocsr()
    n_top = mesh.n_cells(d)
    by_top = geo[d].tocsc()
    seen = np.zeros(n_top, dtype=bool)
    for root in range(n_top):
        if seen[root]:
            continue
        s = 1
        if d == mesh.embedding_dim:
            s = 1 if np.linalg.det(frames[d][root]) > 0 else -1
        signs[d][root] = s
        seen[root] = True
        queue = deque([root])
        while queue:
            c = queue.popleft()
            for k in range(by_top.indptr[c], by_top.indptr[c + 1]):
                b = by_top.indices[k]
                eps_c = by_top.data[k]
                lo, hi = top.indptr[b], top.indptr[b + 1]
                for j in range(lo, hi):
                    other = top.indices[j]
                    if other == c:
                        continue
                    want = -signs[d][c] * eps_c * top.data[j]
                    if seen[other]:
                        if signs[d][other] != want:
                            raise NonOrientable(f"{d}-cells {c} and {other} cannot be oriented compatibly")
                    else:
                        signs[d][other] = want
                        seen[other] = True
                        queue.append(other)
    # nodes stay positively oriented, so a 1-mesh keeps its reference frames
    for b in (boundary_cells(mesh) if d > 1 else []):
        j = top.indptr[b]
        signs[d - 1][b] = signs[d][top.indices[j]] * top.data[j]
    for cell, sign in (overrides or {}).items():
        cell = as_cell(cell)
        if cell.dim >= d - 1 and not (cell.dim == d - 1 and _is_interior(mesh, cell.index)):
            raise ValueError("overrides may only flip interior (d-1)-cells or lower-dimensional cells")
        signs[cell.dim][cell.index] *= int(sign)
    boundaries = [None] + [sp.diags(signs[p - 1]) @ geo[p] @ sp.diags(signs[p]) for p in range(1, d + 1)]
    return OrientedComplex(mesh, signs, boundaries)


def _is_interior(mesh: Mesh, index: int) -> bool:
    inc = mesh.incidence(mesh.dim).tocsr()
    return inc.indptr[index + 1] - inc.indptr[index] == 2


def boundary_matrix(oc: OrientedComplex, p: int) -> sp.csr_matrix:
    return oc.boundary(p)


def fundamental_class(oc: OrientedComplex) -> Chain:
    return Chain(oc.dim, np.ones(oc.mesh.n_cells(oc.dim)))


def matrix_rank(m, tol: float = RANK_TOL) -> int:
    m = m.toarray() if sp.issparse(m) else np.asarray(m)
    if m.size == 0:
        return 0
    s = np.linalg.svd(m.astype(float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def betti_numbers(oc: OrientedComplex) -> tuple[int, ...]:
    d = oc.dim
    ranks = [0] + [matrix_rank(oc.boundary(p)) for p in range(1, d + 1)] + [0]
    return tuple(oc.mesh.n_cells(p) - ranks[p] - ranks[p + 1] for p in range(d + 1))


def write_boundary_coo(oc: OrientedComplex, p: int, path) -> None:
    """Write the nonzeros of the p-th boundary matrix as 'row col value' lines."""
    coo = oc.boundary(p).tocoo()
    order = np.lexsort((coo.row, coo.col))
    with open(path, "w") as fh:
        fh.write(f"# boundary {p} shape {coo.shape[0]} {coo.shape[1]}\n")
        for k in order:
            fh.write(f"{coo.row[k]} {coo.col[k]} {coo.data[k]}\n")
