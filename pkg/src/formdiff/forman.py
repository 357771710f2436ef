"""Forman subdivision of a mesh and discrete differential forms.

A K-cell of dimension k is an incident pair (c_q, b_r) of M-cells with
b_r a face of c_q and q - r = k.  On meshes with cubical corners the
M-cells between b_r and c_q form the face lattice of a k-cube; the
(r+1)-cells in that interval are the cube's "atoms" and every corner of the
cube is the join of a subset of atoms.  Corners are stored as bitmasks over
the atoms, sorted by global M-cell id.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .errors import DegreeOverflow, NonCubicalCorners
from .mesh import CellId, Mesh, as_cell, corner_fraction, mesh_from_incidences
from .orientation import Cochain, OrientedComplex


def _permutation_parity(rows: np.ndarray) -> np.ndarray:
    """Sign of the permutation sorting each row (rows have distinct entries)."""
    rows = np.asarray(rows)
    n = rows.shape[1]
    inversions = np.zeros(rows.shape[0], dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            inversions += rows[:, i] > rows[:, j]
    return np.where(inversions % 2 == 0, 1, -1)


def _sorted_lookup(keys: np.ndarray, query: np.ndarray) -> np.ndarray:
    pos = np.searchsorted(keys, query)
    pos = np.minimum(pos, len(keys) - 1)
    if keys.size == 0 or np.any(keys[pos] != query):
        raise KeyError("pair is not a cell of the subdivision")
    return pos


def _entries(matrix: sp.csr_matrix, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    if rows.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.asarray(matrix[rows, cols]).ravel().astype(np.int64)


class FormanComplex:
    """The subdivision K together with the pair indexing of its cells."""

    def __init__(self, m: OrientedComplex):
        self.m = m
        mesh = m.mesh
        d = mesh.dim
        if d > 3:
            raise ValueError("subdivision is implemented up to dimension 3")
        self.offsets = np.concatenate([[0], np.cumsum(mesh.counts)]).astype(np.int64)
        self.n_m = int(self.offsets[-1])
        self._keys: list[np.ndarray] = []
        self._pairs: list[np.ndarray] = []
        self._corners: list[np.ndarray] = []
        for k in range(d + 1):
            pairs, corners = self._enumerate(k)
            keys = pairs[:, 0] * self.n_m + pairs[:, 1]
            order = np.argsort(keys, kind="stable")
            self._keys.append(keys[order])
            self._pairs.append(pairs[order])
            self._corners.append(corners[order])
        boundaries = [None]
        for k in range(1, d + 1):
            boundaries.append(self._boundary(k))
        kmesh = mesh_from_incidences(self.node_positions, [abs(b) for b in boundaries[1:]])
        signs = self._recover_signs(boundaries)
        self.k = OrientedComplex(kmesh, signs, boundaries)

    # -- indexing --------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.m.dim

    def gid(self, cell) -> int:
        c = as_cell(cell)
        return int(self.offsets[c.dim] + c.index)

    def cell_of_gid(self, g) -> CellId:
        g = int(g)
        p = int(np.searchsorted(self.offsets, g, side="right") - 1)
        return CellId(p, g - int(self.offsets[p]))

    def gid_dims(self, gids: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.offsets, gids, side="right") - 1

    def n_kcells(self, k: int) -> int:
        return len(self._keys[k])

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(self.n_kcells(k) for k in range(self.dim + 1))

    def pairs(self, k: int) -> np.ndarray:
        """(n_k, 2) array of global ids (top cell, bottom cell) per K k-cell."""
        return self._pairs[k]

    def corners(self, k: int) -> np.ndarray:
        """(n_k, 2**k) array of corner K-nodes (global M ids) by atom bitmask."""
        return self._corners[k]

    def pair_of_kcell(self, kcell) -> tuple[CellId, CellId]:
        x = as_cell(kcell)
        top, bottom = self._pairs[x.dim][x.index]
        return self.cell_of_gid(top), self.cell_of_gid(bottom)

    def kcell_of_pair(self, top, bottom) -> CellId:
        c, b = as_cell(top), as_cell(bottom)
        k = c.dim - b.dim
        if k < 0 or k > self.dim:
            raise KeyError(f"({c}, {b}) is not an incident pair")
        key = self.gid(c) * self.n_m + self.gid(b)
        return CellId(k, int(_sorted_lookup(self._keys[k], np.array([key]))[0]))

    def kcells_of_pairs(self, k: int, tops: np.ndarray, bottoms: np.ndarray) -> np.ndarray:
        """Vectorised lookup of K k-cells by global ids of their pairs."""
        return _sorted_lookup(self._keys[k], np.asarray(tops) * self.n_m + np.asarray(bottoms))

    @cached_property
    def node_positions(self) -> np.ndarray:
        mesh = self.m.mesh
        return np.vstack([mesh.centroids(p) for p in range(mesh.dim + 1)])

    @cached_property
    def node_origin_dims(self) -> np.ndarray:
        """Dimension of the M-cell each K-node sits at."""
        return self.gid_dims(np.arange(self.n_m))

    # -- construction ----------------------------------------------------

    def _enumerate(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        mesh = self.m.mesh
        d = mesh.dim
        all_pairs, all_corners = [], []
        for r in range(0, d - k + 1):
            q = r + k
            rel = mesh.face_relation(r, q).tocoo()
            b = rel.row.astype(np.int64) + self.offsets[r]
            c = rel.col.astype(np.int64) + self.offsets[q]
            order = np.lexsort((b, c))
            b, c = b[order], c[order]
            if k == 0:
                corners = b[:, None]
            elif k == 1:
                corners = np.stack([b, c], axis=1)
            else:
                atoms = self._atoms(r, q, k, b, c)
                if k == 2:
                    corners = np.stack([b, atoms[:, 0], atoms[:, 1], c], axis=1)
                else:
                    joins = self._pair_joins(b, c, atoms)
                    corners = np.stack([b, atoms[:, 0], atoms[:, 1], joins[:, 0],
                                        atoms[:, 2], joins[:, 1], joins[:, 2], c], axis=1)
            all_pairs.append(np.stack([c, b], axis=1))
            all_corners.append(corners)
        if not all_pairs:
            return np.zeros((0, 2), dtype=np.int64), np.zeros((0, 2 ** k), dtype=np.int64)
        return np.concatenate(all_pairs), np.concatenate(all_corners)

    def _triples(self, lo: int, mid: int, hi: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All (b, a, c) with b a face of a and a a face of c, as global ids."""
        mesh = self.m.mesh
        first = mesh.face_relation(lo, mid).tocoo()
        second = mesh.face_relation(mid, hi).tocsr()
        reps = np.diff(second.indptr)[first.col]
        b = np.repeat(first.row.astype(np.int64), reps)
        a = np.repeat(first.col.astype(np.int64), reps)
        starts = np.repeat(second.indptr[first.col], reps)
        offs = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
        c = second.indices[starts + offs].astype(np.int64)
        return b + self.offsets[lo], a + self.offsets[mid], c + self.offsets[hi]

    def _grouped(self, b, a, c, size: int, what: str):
        """Group triples by (c, b), returning the a's of each group sorted."""
        order = np.lexsort((a, b, c))
        b, a, c = b[order], a[order], c[order]
        key = c * self.n_m + b
        starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        sizes = np.diff(np.r_[starts, key.size])
        if np.any(sizes != size):
            g = starts[np.flatnonzero(sizes != size)[0]]
            top, bottom = self.cell_of_gid(c[g]), self.cell_of_gid(b[g])
            raise NonCubicalCorners(
                f"{what}: {bottom} in {top} has {sizes[sizes != size][0]} instead of {size}")
        return key[starts], a.reshape(-1, size)

    def _atoms(self, r: int, q: int, k: int, b: np.ndarray, c: np.ndarray) -> np.ndarray:
        tb, ta, tc = self._triples(r, r + 1, q)
        keys, atoms = self._grouped(tb, ta, tc, k, "cells covering a corner")
        want = c * self.n_m + b
        return atoms[_sorted_lookup(keys, want)]

    def _pair_joins(self, b: np.ndarray, c: np.ndarray, atoms: np.ndarray) -> np.ndarray:
        """For 3-cubes: the 2-cell spanned by each pair of atoms (01, 02, 12)."""
        tb, tf, tc = self._triples(0, 2, 3)
        keys, faces = self._grouped(tb, tf, tc, 3, "faces at a corner")
        faces = faces[_sorted_lookup(keys, c * self.n_m + b)]
        edge_face = self.m.mesh.face_relation(1, 2).tocoo()
        ef_keys = np.sort((edge_face.row.astype(np.int64) + self.offsets[1]) * self.n_m
                          + edge_face.col.astype(np.int64) + self.offsets[2])

        def member(e, f):
            key = e * self.n_m + f
            pos = np.minimum(np.searchsorted(ef_keys, key), len(ef_keys) - 1)
            return ef_keys[pos] == key

        joins = np.empty((len(b), 3), dtype=np.int64)
        for col, (i, j) in enumerate(((0, 1), (0, 2), (1, 2))):
            hit = np.stack([member(atoms[:, i], faces[:, s]) & member(atoms[:, j], faces[:, s])
                            for s in range(3)], axis=1)
            if np.any(hit.sum(axis=1) != 1):
                raise NonCubicalCorners("corner faces do not pair up the corner edges")
            joins[:, col] = faces[np.arange(len(b)), hit.argmax(axis=1)]
        return joins

    def _eps(self, upper: np.ndarray, lower: np.ndarray) -> np.ndarray:
        """Relative orientations in M for global ids of (p-cell, hyperface) pairs."""
        out = np.zeros(upper.size, dtype=np.int64)
        dims = self.gid_dims(upper)
        for p in np.unique(dims):
            sel = dims == p
            out[sel] = _entries(self.m.boundary(int(p)), lower[sel] - self.offsets[p - 1],
                                upper[sel] - self.offsets[p])
        if np.any(out == 0):
            raise AssertionError("missing relative orientation")
        return out

    def _facets(self, k: int):
        """Per K k-cell and bit i: bottom and top facet indices and coefficients."""
        corners = self._corners[k]
        full = 2 ** k - 1
        bottom_idx, top_idx, bottom_coef, top_coef = [], [], [], []
        for i in range(k):
            lo_top = corners[:, full ^ (1 << i)]
            bottom_idx.append(self.kcells_of_pairs(k - 1, lo_top, corners[:, 0]))
            bottom_coef.append(self._eps(corners[:, full], lo_top))
            hi_bottom = corners[:, 1 << i]
            top_idx.append(self.kcells_of_pairs(k - 1, corners[:, full], hi_bottom))
            top_coef.append((-1) ** k * self._eps(hi_bottom, corners[:, 0]))
        return bottom_idx, top_idx, bottom_coef, top_coef

    def _boundary(self, k: int) -> sp.csr_matrix:
        bottom_idx, top_idx, bottom_coef, top_coef = self._facets(k)
        n = self.n_kcells(k)
        cols = np.tile(np.arange(n), 2 * k)
        rows = np.concatenate(bottom_idx + top_idx)
        data = np.concatenate(bottom_coef + top_coef)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n_kcells(k - 1), n))

    def facet_parity(self, k: int, i: int) -> np.ndarray:
        """Parity between a top facet's own atom order and the bit order of X."""
        if k < 3:
            return np.ones(self.n_kcells(k), dtype=np.int64)
        corners = self._corners[k]
        others = [j for j in range(k) if j != i]
        return _permutation_parity(np.stack([corners[:, (1 << i) | (1 << j)] for j in others], axis=1))

    def _recover_signs(self, boundaries) -> list[np.ndarray]:
        """Orientation signs of K-cells in their cube coordinates.

        A K-cell X carries s_X e_0 ^ ... ^ e_{k-1} in the coordinates given by
        its atom bits.  The facet of X at x_i = t then has relative
        orientation (2t - 1) (-1)^i s_Y sigma_Y s_X, where sigma_Y is the
        parity between the facet's own atom order and the bits of X.  Signs
        are fixed one dimension at a time from the first facet and checked
        against all the others.
        """
        signs = [np.ones(self.n_kcells(0), dtype=np.int64)]
        for k in range(1, self.dim + 1):
            bottom_idx, top_idx, bottom_coef, top_coef = self._facets(k)
            lower = signs[k - 1]
            s = -bottom_coef[0] * lower[bottom_idx[0]]
            for i in range(k):
                got_bottom = -((-1) ** i) * lower[bottom_idx[i]] * s
                got_top = ((-1) ** i) * lower[top_idx[i]] * self.facet_parity(k, i) * s
                if np.any(got_bottom != bottom_coef[i]) or np.any(got_top != top_coef[i]):
                    raise AssertionError("inconsistent orientation of the subdivision")
            signs.append(s)
        return signs

    # -- geometry --------------------------------------------------------

    def kcell_measures(self, k: int) -> np.ndarray:
        return self._kmeasures[k]

    @cached_property
    def _kmeasures(self) -> list[np.ndarray]:
        x = self.node_positions
        out = [np.ones(self.n_kcells(0))]
        if self.dim >= 1:
            c = self._corners[1]
            out.append(np.linalg.norm(x[c[:, 1]] - x[c[:, 0]], axis=1))
        if self.dim >= 2:
            c = self._corners[2]
            out.append(_tri_area(x[c[:, 0]], x[c[:, 1]], x[c[:, 3]]) + _tri_area(x[c[:, 0]], x[c[:, 2]], x[c[:, 3]]))
        if self.dim >= 3:
            out.append(_hex_volume(x, self._corners[3]))
        return out

    def corner_fractions(self) -> tuple[np.ndarray, np.ndarray]:
        """Sphere fraction of every top K-cell at each of its corners.

        Returns (nodes, fractions), both of shape (n_d, 2**d).  In full
        dimension a corner that is folded against its cell counts negatively,
        so the fractions around an interior node always add up to one.
        """
        d = self.dim
        x = self.node_positions
        corners = self._corners[d]
        frac = np.empty(corners.shape)
        dets = np.zeros(corners.shape)
        for v in range(2 ** d):
            vec = np.stack([x[corners[:, v ^ (1 << i)]] - x[corners[:, v]] for i in range(d)], axis=1)
            frac[:, v] = corner_fraction(vec)
            if d > 1 and x.shape[1] == d:
                dets[:, v] = np.linalg.det(vec) * (-1) ** bin(v).count("1")
        if d > 1 and x.shape[1] == d:
            orient = np.sign(dets[:, :1])
            frac *= np.where(np.sign(dets) * orient < 0, -1.0, 1.0)
        return corners, frac

    def node_curvatures(self) -> np.ndarray:
        """kappa at every K-node: reciprocal of the sphere fraction around it."""
        nodes, frac = self.corner_fractions()
        total = np.bincount(nodes.ravel(), weights=frac.ravel(), minlength=self.n_kcells(0))
        return 1.0 / total


def _tri_area(a, b, c):
    u, v = b - a, c - a
    if u.shape[1] == 2:
        return 0.5 * np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
    if u.shape[1] == 1:
        return np.zeros(len(u))
    return 0.5 * np.linalg.norm(np.cross(u, v), axis=1)


# faces of the 3-cube as (fixed bit, value, free bits), each quad split along
# the diagonal through its lowest corner
def _hex_volume(x: np.ndarray, corners: np.ndarray) -> np.ndarray:
    origin = x[corners[:, 0]]
    vol = np.zeros(len(corners))
    for i in range(3):
        j, l = [b for b in range(3) if b != i]
        for t in (0, 1):
            m00 = t << i
            m10, m01, m11 = m00 | (1 << j), m00 | (1 << l), m00 | (1 << j) | (1 << l)
            # loop m00 -> m10 -> m11 -> m01 has normal e_j x e_l = (-1)^i e_i
            outward = (1 if t else -1) * (-1) ** i
            p00, p10, p01, p11 = (x[corners[:, m]] - origin for m in (m00, m10, m01, m11))
            tri = np.einsum("ij,ij->i", p00, np.cross(p10, p11)) + np.einsum("ij,ij->i", p00, np.cross(p11, p01))
            vol += outward * tri
    return np.abs(vol) / 6.0


def forman_subdivide(m: OrientedComplex) -> FormanComplex:
    return FormanComplex(m)


# -- forms ---------------------------------------------------------------

@dataclass
class Form:
    """Discrete p-form: coefficients on pairs (c_q, b_{q-p}) with b a face of c."""

    degree: int
    coefficients: dict[tuple[CellId, CellId], float] = field(default_factory=dict)

    @classmethod
    def basis(cls, top, bottom, value: float = 1.0) -> "Form":
        c, b = as_cell(top), as_cell(bottom)
        return cls(c.dim - b.dim, {(c, b): value})

    def cleaned(self, tol: float = 0.0) -> "Form":
        return Form(self.degree, {k: v for k, v in self.coefficients.items() if abs(v) > tol})


def exterior_derivative(m: OrientedComplex, omega: Form) -> Form:
    """D omega = omega o boundary - (-1)^p boundary o omega, expanded on basis pairs."""
    p = omega.degree
    mesh = m.mesh
    if p > mesh.dim - 1:
        raise DegreeOverflow(f"cannot differentiate a {p}-form on a {mesh.dim}-mesh")
    out: dict[tuple[CellId, CellId], float] = {}
    for (c, b), value in omega.coefficients.items():
        c, b = as_cell(c), as_cell(b)
        if c.dim < mesh.dim:
            bnd = m.boundary(c.dim + 1).tocsr()
            row = bnd.getrow(c.index)
            for a, eps in zip(row.indices, row.data):
                key = (CellId(c.dim + 1, int(a)), b)
                out[key] = out.get(key, 0.0) + value * eps
        if b.dim > 0:
            bnd = m.boundary(b.dim).tocsc()
            lo, hi = bnd.indptr[b.index], bnd.indptr[b.index + 1]
            for a, eps in zip(bnd.indices[lo:hi], bnd.data[lo:hi]):
                key = (c, CellId(b.dim - 1, int(a)))
                out[key] = out.get(key, 0.0) - (-1) ** p * value * eps
    return Form(p + 1, {k: v for k, v in out.items() if v != 0})


def forman_iso(fc: FormanComplex, omega: Form) -> Cochain:
    """Relabel a form on M as a cochain on K."""
    values = np.zeros(fc.n_kcells(omega.degree))
    for (c, b), value in omega.coefficients.items():
        x = fc.kcell_of_pair(c, b)
        if x.dim != omega.degree:
            raise ValueError("coefficient pair does not match the form degree")
        values[x.index] += value
    return Cochain(omega.degree, values)


def forman_iso_inv(fc: FormanComplex, sigma: Cochain) -> Form:
    coeffs = {}
    for i in np.flatnonzero(sigma.coefficients):
        coeffs[fc.pair_of_kcell(CellId(sigma.dim, int(i)))] = float(sigma.coefficients[i])
    return Form(sigma.dim, coeffs)


def unit_form(m: OrientedComplex) -> Form:
    """The identity 0-form: coefficient 1 on every (c, c)."""
    mesh = m.mesh
    return Form(0, {(CellId(p, i), CellId(p, i)): 1.0
                    for p in range(mesh.dim + 1) for i in range(mesh.n_cells(p))})


def coboundary(fc: FormanComplex, sigma: Cochain) -> Cochain:
    """delta_K on a K-cochain."""
    if sigma.dim >= fc.dim:
        return Cochain(sigma.dim + 1, np.zeros(0))
    return Cochain(sigma.dim + 1, fc.k.coboundary(sigma.dim) @ sigma.coefficients)
