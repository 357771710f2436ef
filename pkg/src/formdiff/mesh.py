"""Polytopal meshes: combinatorics, validation and geometric measures."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateCell, DiamondViolation, MissingFace, NotIncident

DEGENERACY_TOL = 1e-12


class CellId(NamedTuple):
    dim: int
    index: int


def as_cell(c) -> CellId:
    if isinstance(c, CellId):
        return c
    dim, index = c
    return CellId(int(dim), int(index))


class Mesh:
    """Immutable polytopal cell complex.

    Cells of dimension p >= 1 are described by the sparse incidence matrix
    ``incidence(p)`` of shape (n_{p-1}, n_p); column j lists the hyperfaces
    of p-cell j.  All other face relations are derived from these.
    """

    def __init__(self, vertices: np.ndarray, incidences: Sequence[sp.spmatrix]):
        vertices = np.array(vertices, dtype=float)
        if vertices.ndim != 2:
            raise ValueError("vertices must be a 2D array")
        vertices.setflags(write=False)
        self._vertices = vertices
        self._inc = [None] + [sp.csc_matrix(m, dtype=np.int8) for m in incidences]
        self._relations: dict[tuple[int, int], sp.csr_matrix] = {}
        self._centroids: dict[int, np.ndarray] = {}
        self._measures: dict[int, np.ndarray] = {}

    # -- combinatorics -------------------------------------------------

    @property
    def vertices(self) -> np.ndarray:
        return self._vertices

    @property
    def dim(self) -> int:
        return len(self._inc) - 1

    @property
    def embedding_dim(self) -> int:
        return self._vertices.shape[1]

    def n_cells(self, p: int) -> int:
        if p == 0:
            return self._vertices.shape[0]
        return self._inc[p].shape[1]

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(self.n_cells(p) for p in range(self.dim + 1))

    def incidence(self, p: int) -> sp.csc_matrix:
        """Unsigned hyperface incidence between (p-1)-cells and p-cells."""
        return self._inc[p]

    def hyperfaces(self, c) -> np.ndarray:
        c = as_cell(c)
        if c.dim == 0:
            return np.empty(0, dtype=np.int64)
        m = self._inc[c.dim]
        return m.indices[m.indptr[c.index]:m.indptr[c.index + 1]].astype(np.int64)

    def face_relation(self, r: int, q: int) -> sp.csr_matrix:
        """Boolean matrix R with R[b, c] = 1 iff r-cell b is a face of q-cell c."""
        if r > q:
            raise ValueError("face_relation needs r <= q")
        key = (r, q)
        if key not in self._relations:
            if r == q:
                rel = sp.identity(self.n_cells(q), dtype=np.int8, format="csr")
            else:
                lower = self.face_relation(r, q - 1).astype(np.int32)
                rel = (lower @ self._inc[q].astype(np.int32)).tocsr()
                rel.data[:] = 1
                rel = rel.astype(np.int8)
            rel.sort_indices()
            self._relations[key] = rel
        return self._relations[key]

    def faces(self, c, q: int) -> np.ndarray:
        """Indices of the q-faces of cell c (q <= c.dim)."""
        c = as_cell(c)
        rel = self.face_relation(q, c.dim).tocsc()
        return np.sort(rel.indices[rel.indptr[c.index]:rel.indptr[c.index + 1]]).astype(np.int64)

    def cofaces(self, c, q: int) -> np.ndarray:
        """Indices of the q-cells having c as a face (q >= c.dim)."""
        c = as_cell(c)
        rel = self.face_relation(c.dim, q)
        return rel.indices[rel.indptr[c.index]:rel.indptr[c.index + 1]].astype(np.int64)

    def cell_vertices(self, c) -> np.ndarray:
        c = as_cell(c)
        if c.dim == 0:
            return np.array([c.index], dtype=np.int64)
        return self.faces(c, 0)

    def is_face(self, b, c) -> bool:
        b, c = as_cell(b), as_cell(c)
        if b.dim > c.dim:
            return False
        return bool(self.face_relation(b.dim, c.dim)[b.index, c.index])

    # -- geometry ------------------------------------------------------

    @cached_property
    def scale(self) -> float:
        """Bounding-box diagonal."""
        v = self._vertices
        return float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))

    def centroids(self, p: int) -> np.ndarray:
        """Vertex-mean centroid of every p-cell."""
        if p not in self._centroids:
            if p == 0:
                cen = self._vertices
            else:
                rel = self.face_relation(0, p).T.astype(float)
                counts = np.asarray(rel.sum(axis=1)).ravel()
                cen = (rel @ self._vertices) / counts[:, None]
                cen.setflags(write=False)
            self._centroids[p] = cen
        return self._centroids[p]

    def centroid(self, c) -> np.ndarray:
        c = as_cell(c)
        return self.centroids(c.dim)[c.index]

    def measures(self, p: int) -> np.ndarray:
        if p not in self._measures:
            mu = _cell_measures(self, p)
            tol = DEGENERACY_TOL * self.scale
            bad = np.flatnonzero(mu < tol)
            if p > 0 and bad.size:
                raise DegenerateCell(f"{bad.size} {p}-cells have measure below {tol:g}, e.g. cell {bad[0]}")
            mu.setflags(write=False)
            self._measures[p] = mu
        return self._measures[p]

    def measure(self, c) -> float:
        c = as_cell(c)
        return float(self.measures(c.dim)[c.index])

    def edge_endpoints(self) -> np.ndarray:
        """(n1, 2) array of node indices per edge."""
        inc = self._inc[1]
        if np.any(np.diff(inc.indptr) != 2):
            raise ValueError("every edge must have exactly two nodes")
        return inc.indices.reshape(-1, 2).astype(np.int64)


def build_mesh(vertex_coords, cell_tables: Sequence[Sequence[Sequence[int]]]) -> Mesh:
    """Build a mesh from hyperface tables.

    ``cell_tables[p - 1]`` lists the p-cells, each as a sequence of
    (p-1)-cell indices.  Raises MissingFace for dangling references and
    DiamondViolation when the face poset is not that of a polytopal mesh.
    """
    vertices = np.asarray(vertex_coords, dtype=float)
    if vertices.ndim == 1:
        vertices = vertices[:, None]
    n_lower = vertices.shape[0]
    incidences = []
    for p, table in enumerate(cell_tables, start=1):
        rows, cols = [], []
        for j, faces in enumerate(table):
            faces = [int(f) for f in faces]
            for f in faces:
                if f < 0 or f >= n_lower:
                    raise MissingFace(f"{p}-cell {j} references missing {p - 1}-cell {f}")
            if len(set(faces)) != len(faces):
                raise MissingFace(f"{p}-cell {j} lists a hyperface twice")
            rows.extend(faces)
            cols.extend([j] * len(faces))
        n = len(table)
        incidences.append(sp.csc_matrix(
            (np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n_lower, n)))
        n_lower = n
    while incidences and incidences[-1].shape[1] == 0:
        incidences.pop()
    return mesh_from_incidences(vertices, incidences)


def mesh_from_incidences(vertices: np.ndarray, incidences: Sequence[sp.spmatrix]) -> Mesh:
    """Build a mesh from sparse incidence matrices and check its structure."""
    mesh = Mesh(vertices, incidences)
    if mesh.dim >= 1 and np.any(np.diff(mesh.incidence(1).indptr) != 2):
        raise DiamondViolation("every edge must have exactly two distinct nodes")
    for p in range(2, mesh.dim + 1):
        lower = mesh.incidence(p - 1).astype(np.int32)
        upper = mesh.incidence(p).astype(np.int32)
        paths = (lower @ upper).tocoo()
        bad = paths.data != 2
        if np.any(bad):
            k = np.flatnonzero(bad)[0]
            raise DiamondViolation(
                f"{p}-cell {paths.col[k]} and its {p - 2}-face {paths.row[k]} "
                f"have {paths.data[k]} intermediate cells")
        if np.any(np.diff(mesh.incidence(p).indptr) < p + 1):
            raise DiamondViolation(f"some {p}-cell has fewer than {p + 1} hyperfaces")
    return mesh


# -- measures ----------------------------------------------------------

def _triangle_areas(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    u, v = b - a, c - a
    if u.shape[1] == 2:
        return 0.5 * np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
    return 0.5 * np.linalg.norm(np.cross(u, v), axis=1)


def _expand(inc: sp.csc_matrix) -> tuple[np.ndarray, np.ndarray]:
    """(column, row) pairs of the nonzeros of a csc matrix."""
    cols = np.repeat(np.arange(inc.shape[1]), np.diff(inc.indptr))
    return cols, inc.indices.astype(np.int64)


def _cell_measures(mesh: Mesh, p: int) -> np.ndarray:
    x = mesh.vertices
    if p == 0:
        return np.ones(mesh.n_cells(0))
    ends = mesh.edge_endpoints()
    if p == 1:
        return np.linalg.norm(x[ends[:, 1]] - x[ends[:, 0]], axis=1)
    if p == 2:
        return _face_areas(mesh, ends)
    if p == 3:
        cells, faces = _expand(mesh.incidence(3))
        f_of, e_of = _expand(mesh.incidence(2))
        counts = np.diff(mesh.incidence(2).indptr)
        starts = mesh.incidence(2).indptr[:-1]
        # every (cell, face, edge) triple
        reps = counts[faces]
        cell_t = np.repeat(cells, reps)
        face_t = np.repeat(faces, reps)
        offs = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
        edge_t = e_of[np.repeat(starts[faces], reps) + offs]
        cc = mesh.centroids(3)[cell_t]
        fc = mesh.centroids(2)[face_t]
        a = x[ends[edge_t, 0]] - cc
        b = x[ends[edge_t, 1]] - cc
        vol = np.abs(np.einsum("ij,ij->i", np.cross(a, b), fc - cc)) / 6.0
        return np.bincount(cell_t, weights=vol, minlength=mesh.n_cells(3))
    raise ValueError(f"measures not supported for dimension {p}")


def _face_areas(mesh: Mesh, ends: np.ndarray) -> np.ndarray:
    x = mesh.vertices
    faces, edges = _expand(mesh.incidence(2))
    cen = mesh.centroids(2)
    area = np.bincount(faces, weights=_triangle_areas(cen[faces], x[ends[edges, 0]], x[ends[edges, 1]]),
                       minlength=mesh.n_cells(2))
    # quadrilaterals are split into two triangles along the diagonal through
    # their lowest-index vertex, which stays exact when they are not planar
    nedge = np.diff(mesh.incidence(2).indptr)
    quads = np.flatnonzero(nedge == 4)
    if quads.size:
        inc = mesh.incidence(2)
        qe = np.stack([inc.indices[inc.indptr[q]:inc.indptr[q] + 4] for q in quads])
        qv = ends[qe]                                   # (m, 4, 2)
        v0 = qv.reshape(len(quads), -1).min(axis=1)
        touches = (qv == v0[:, None, None]).any(axis=2)  # edges through v0
        nbr = np.where(qv[..., 0] == v0[:, None], qv[..., 1], qv[..., 0])
        n1 = np.array([row[t][0] for row, t in zip(nbr, touches)])
        n2 = np.array([row[t][1] for row, t in zip(nbr, touches)])
        allv = qv.reshape(len(quads), -1)
        opp = np.array([np.setdiff1d(r, (a, b, c))[0] for r, a, b, c in zip(allv, v0, n1, n2)])
        area[quads] = (_triangle_areas(x[v0], x[n1], x[opp]) + _triangle_areas(x[v0], x[n2], x[opp]))
    return area


# -- angles and curvature ----------------------------------------------

def corner_fraction(vectors: np.ndarray) -> np.ndarray:
    """Sphere fraction subtended at a cubical corner.

    ``vectors`` has shape (m, d, e): the d edge vectors leaving the corner.
    For d = 3 the spherical triangle spanned by the three directions is
    measured with the Van Oosterom-Strackee formula.
    """
    m, d = vectors.shape[:2]
    if d == 1:
        return np.full(m, 0.5)
    u = vectors / np.linalg.norm(vectors, axis=2, keepdims=True)
    if d == 2:
        cos = np.einsum("ij,ij->i", u[:, 0], u[:, 1])
        if u.shape[2] == 2:
            sin = np.abs(u[:, 0, 0] * u[:, 1, 1] - u[:, 0, 1] * u[:, 1, 0])
        else:
            sin = np.linalg.norm(np.cross(u[:, 0], u[:, 1]), axis=1)
        return np.arctan2(sin, cos) / (2 * np.pi)
    if d == 3:
        return _solid_angle(u[:, 0], u[:, 1], u[:, 2]) / (4 * np.pi)
    raise ValueError(f"unsupported corner dimension {d}")


def _solid_angle(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Solid angle of the spherical triangle with unit-vector corners."""
    det = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2.0 * np.arctan2(det, den)


def angle_measure(mesh: Mesh, cell, node) -> float:
    """Fraction of the unit sphere filled by the corner of a top cell at a node."""
    c, a = as_cell(cell), as_cell(node)
    if a.dim != 0 or not mesh.is_face(a, c):
        raise NotIncident(f"{a} is not a node of {c}")
    d = c.dim
    if d == 1:
        return 0.5
    x = mesh.vertices
    ends = mesh.edge_endpoints()
    edges = [e for e in mesh.faces(c, 1) if a.index in ends[e]]
    other = {e: (ends[e, 1] if ends[e, 0] == a.index else ends[e, 0]) for e in edges}
    if d == 2:
        vec = np.array([[x[other[e]] - x[a.index] for e in edges]])
        return float(corner_fraction(vec)[0])
    # order the corner's edges cyclically through the faces they share
    faces = mesh.faces(c, 2)
    ring: dict[int, list[int]] = {e: [] for e in edges}
    for f in faces:
        fe = [e for e in mesh.hyperfaces(CellId(2, f)) if e in ring]
        if len(fe) == 2:
            ring[fe[0]].append(fe[1])
            ring[fe[1]].append(fe[0])
    order = [edges[0]]
    prev = None
    while len(order) < len(edges):
        nxt = [e for e in ring[order[-1]] if e != prev and e not in order]
        if not nxt:
            break
        prev = order[-1]
        order.append(nxt[0])
    u = np.array([x[other[e]] - x[a.index] for e in order], dtype=float)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    total = 0.0
    for i in range(1, len(u) - 1):
        total += _solid_angle(u[None, 0], u[None, i], u[None, i + 1])[0]
    return total / (4 * np.pi)


def node_curvature(mesh: Mesh, node) -> float:
    """Reciprocal of the total sphere fraction around a node."""
    a = as_cell(node)
    cells = mesh.cofaces(a, mesh.dim)
    return 1.0 / sum(angle_measure(mesh, CellId(mesh.dim, c), a) for c in cells)


# -- validation --------------------------------------------------------

@dataclass
class ValidationReport:
    is_manifold_like: bool
    is_p_regular: dict[int, bool]
    has_cubical_corners: bool
    boundary_cell_ids: set[CellId]
    failures: list[tuple[str, list[CellId]]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.is_manifold_like and self.has_cubical_corners


def boundary_cells(mesh: Mesh) -> np.ndarray:
    """Indices of the (d-1)-cells having exactly one d-superface."""
    d = mesh.dim
    if d == 0:
        return np.empty(0, dtype=np.int64)
    inc = mesh.incidence(d).tocsr()
    return np.flatnonzero(np.diff(inc.indptr) == 1)


def _regular_at(mesh: Mesh, p: int) -> list[int]:
    """p-cells around which the (p+2)-superfaces are not (p+1)-connected."""
    bad = []
    up1 = mesh.face_relation(p, p + 1)
    up2 = mesh.face_relation(p, p + 2)
    inc = mesh.incidence(p + 2).tocsr()
    for a in range(mesh.n_cells(p)):
        tops = up2.indices[up2.indptr[a]:up2.indptr[a + 1]]
        if tops.size < 2:
            continue
        mids = set(up1.indices[up1.indptr[a]:up1.indptr[a + 1]].tolist())
        # union-find over the tops joined through shared mids
        parent = {t: t for t in tops.tolist()}

        def find(t):
            while parent[t] != t:
                parent[t] = parent[parent[t]]
                t = parent[t]
            return t

        for m in mids:
            around = inc.indices[inc.indptr[m]:inc.indptr[m + 1]]
            around = [t for t in around.tolist() if t in parent]
            for t in around[1:]:
                parent[find(t)] = find(around[0])
        if len({find(t) for t in parent}) > 1:
            bad.append(a)
    return bad


def validate(mesh: Mesh) -> ValidationReport:
    d = mesh.dim
    failures: list[tuple[str, list[CellId]]] = []
    manifold = True
    for p in range(d):
        rel = mesh.face_relation(p, d)
        lonely = np.flatnonzero(np.diff(rel.indptr) == 0)
        if lonely.size:
            manifold = False
            failures.append((f"{p}-cells without a {d}-superface", [CellId(p, int(i)) for i in lonely]))
    if d >= 1:
        nsup = np.diff(mesh.incidence(d).tocsr().indptr)
        crowded = np.flatnonzero(nsup > 2)
        if crowded.size:
            manifold = False
            failures.append((f"{d - 1}-cells with more than two {d}-superfaces",
                             [CellId(d - 1, int(i)) for i in crowded]))
    regular = {}
    for p in range(d - 1):
        bad = _regular_at(mesh, p)
        regular[p] = not bad
        if bad:
            manifold = False
            failures.append((f"not {p}-regular", [CellId(p, i) for i in bad]))
    cubical = True
    if d >= 1:
        # edges of each top cell meeting each of its nodes
        node_edge = mesh.incidence(1).astype(np.int32)
        edge_top = mesh.face_relation(1, d).astype(np.int32)
        node_top = mesh.face_relation(0, d).tocoo()
        meet = (node_edge @ edge_top).tocsr()
        counts = np.asarray(meet[node_top.row, node_top.col]).ravel()
        wrong = counts != d
        if np.any(wrong):
            cubical = False
            failures.append(("non-cubical corners",
                             sorted({CellId(d, int(c)) for c in node_top.col[wrong]})))
    bcells = {CellId(d - 1, int(i)) for i in boundary_cells(mesh)} if d >= 1 else set()
    return ValidationReport(manifold, regular, cubical, bcells, failures)


def submesh(mesh: Mesh, p: int, top_cells: Iterable[int]) -> Mesh:
    """Closed mesh made of the given p-cells and all their faces, reindexed."""
    top = np.unique(np.asarray(list(top_cells), dtype=np.int64))
    keep = {p: top}
    for q in range(p, 0, -1):
        inc = mesh.incidence(q)[:, keep[q]]
        keep[q - 1] = np.unique(inc.tocoo().row)
    if top.size == 0:
        return Mesh(np.zeros((0, mesh.embedding_dim)), [])
    incs = []
    for q in range(1, p + 1):
        incs.append(mesh.incidence(q)[keep[q - 1]][:, keep[q]])
    return Mesh(mesh.vertices[keep[0]], incs)


def boundary_submesh(mesh: Mesh) -> Mesh:
    """The closed (d-1)-mesh of boundary cells and their faces."""
    return submesh(mesh, mesh.dim - 1, boundary_cells(mesh))
