"""Mesh generators: cubical grids and small fixture complexes."""

from __future__ import annotations

from itertools import combinations
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, build_mesh, mesh_from_incidences, submesh


def _cubical_tables(shape: Sequence[int], periodic: bool):
    """Incidence matrices of a tensor-product grid of unit cubes.

    A p-cell is identified by its lowest grid point x and the set S of axes
    it spans.  Returns the node grid coordinates and the incidences.
    """
    shape = tuple(int(n) for n in shape)
    d = len(shape)
    npts = tuple(n if periodic else n + 1 for n in shape)
    node_id = np.arange(int(np.prod(npts))).reshape(npts)
    ids: dict[tuple[int, ...], np.ndarray] = {(): node_id}
    offsets = {0: 0}
    counts = {0: node_id.size}
    for p in range(1, d + 1):
        start = 0
        for axes in combinations(range(d), p):
            ext = tuple(shape[a] if (a in axes or periodic) else shape[a] + 1 for a in range(d))
            ids[axes] = start + np.arange(int(np.prod(ext))).reshape(ext)
            start += int(np.prod(ext))
        counts[p] = start

    def lookup(axes, idx):
        arr = ids[axes]
        if periodic:
            idx = tuple(i % n for i, n in zip(idx, arr.shape))
        return arr[idx]

    incidences = []
    for p in range(1, d + 1):
        rows, cols = [], []
        for axes in combinations(range(d), p):
            grid = np.indices(ids[axes].shape).reshape(d, -1)
            me = ids[axes].reshape(-1)
            for a in axes:
                sub = tuple(b for b in axes if b != a)
                lo = tuple(grid)
                hi = list(grid)
                hi[a] = hi[a] + 1
                for pos in (lo, tuple(hi)):
                    rows.append(lookup(sub, pos))
                    cols.append(me)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        incidences.append(sp.csc_matrix(
            (np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(counts[p - 1], counts[p])))
    points = np.indices(npts).reshape(d, -1).T.astype(float)
    return points, incidences


def generate_regular_grid(n: int | Sequence[int], bounds=None, dim: int = 3) -> Mesh:
    """Axis-aligned grid of n^dim boxes tiling ``bounds`` (default unit box).

    ``bounds`` is a sequence of (low, high) pairs, one per axis.
    """
    shape = (int(n),) * dim if np.isscalar(n) else tuple(int(k) for k in n)
    if min(shape) < 1:
        raise ValueError("grid needs at least one cell per axis")
    d = len(shape)
    if bounds is None:
        bounds = [(0.0, 1.0)] * d
    bounds = np.asarray(bounds, dtype=float)
    points, incidences = _cubical_tables(shape, periodic=False)
    coords = bounds[:, 0] + points / np.array(shape) * (bounds[:, 1] - bounds[:, 0])
    return mesh_from_incidences(coords, incidences)


def interval_mesh(n: int, length: float = 1.0) -> Mesh:
    return generate_regular_grid(n, [(0.0, length)], dim=1)


def torus_surface(n_major: int = 6, n_minor: int = 4, radii=(2.0, 1.0)) -> Mesh:
    """Quadrilateral grid on a torus of revolution in 3D (a closed 2-mesh)."""
    if n_major < 3 or n_minor < 3:
        raise ValueError("torus grid needs at least 3 cells in each direction")
    points, incidences = _cubical_tables((n_major, n_minor), periodic=True)
    big, small = radii
    t = 2 * np.pi * points[:, 0] / n_major
    s = 2 * np.pi * points[:, 1] / n_minor
    xyz = np.stack([(big + small * np.cos(s)) * np.cos(t),
                    (big + small * np.cos(s)) * np.sin(t),
                    small * np.sin(s)], axis=1)
    return mesh_from_incidences(xyz, incidences)


def annulus(n: int = 4, hole: int = 2) -> Mesh:
    """Square n x n grid with the central hole x hole block of squares removed."""
    if (n - hole) % 2 or hole < 1 or hole > n - 2:
        raise ValueError("hole must be centred with a rim of at least one cell")
    grid = generate_regular_grid(n, dim=2)
    lo = (n - hole) // 2
    keep = [j * n + i for i in range(n) for j in range(n)
            if not (lo <= i < lo + hole and lo <= j < lo + hole)]
    # square (i, j) of the grid has index i * n + j by construction
    return submesh(grid, 2, keep)


def mobius_strip(n: int = 6) -> Mesh:
    """Quad strip of n cells closed with a half twist."""
    if n < 3:
        raise ValueError("need at least 3 cells")
    t = 2 * np.pi * np.arange(n) / n
    pts = []
    for j in (-1.0, 1.0):
        w = 0.4 * j
        pts.append(np.stack([(1 + w * np.cos(t / 2)) * np.cos(t),
                             (1 + w * np.cos(t / 2)) * np.sin(t),
                             w * np.sin(t / 2)], axis=1))
    xyz = np.vstack(pts)              # node (i, j) -> j * n + i

    def node(i, j):
        return j * n + i

    rungs = [(node(i, 0), node(i, 1)) for i in range(n)]
    rails = [(node(i, j), node(i + 1, j)) for j in (0, 1) for i in range(n - 1)]
    rails += [(node(n - 1, 0), node(0, 1)), (node(n - 1, 1), node(0, 0))]
    edges = rungs + rails
    index = {frozenset(e): k for k, e in enumerate(edges)}
    faces = []
    for i in range(n):
        if i < n - 1:
            loop = [node(i, 0), node(i + 1, 0), node(i + 1, 1), node(i, 1)]
        else:
            loop = [node(i, 0), node(0, 1), node(0, 0), node(i, 1)]
        faces.append([index[frozenset((loop[k], loop[(k + 1) % 4]))] for k in range(4)])
    return build_mesh(xyz, [edges, faces])


def polygon_mesh(vertices, loops: Sequence[Sequence[int]]) -> Mesh:
    """2-mesh from polygons given as vertex loops."""
    edges: dict[frozenset, int] = {}
    faces = []
    for loop in loops:
        f = []
        for k in range(len(loop)):
            key = frozenset((loop[k], loop[(k + 1) % len(loop)]))
            f.append(edges.setdefault(key, len(edges)))
        faces.append(f)
    edge_table = [sorted(e) for e in sorted(edges, key=edges.get)]
    return build_mesh(vertices, [edge_table, faces])


def polyhedron_mesh(vertices, face_loops: Sequence[Sequence[int]]) -> Mesh:
    """3-mesh of a single polyhedron given by its boundary faces as vertex loops."""
    surface = polygon_mesh(vertices, face_loops)
    edges = [list(surface.hyperfaces((1, e))) for e in range(surface.n_cells(1))]
    faces = [list(surface.hyperfaces((2, f))) for f in range(surface.n_cells(2))]
    return build_mesh(vertices, [edges, faces, [list(range(len(faces)))]])


def two_triangles() -> Mesh:
    """Two triangles F1 (above) and F2 (below) sharing the edge E3 = N3N4.

    Node k is N_{k+1}; edges are E1 = N1N3, E2 = N1N4, E3 = N3N4,
    E4 = N2N3, E5 = N2N4.
    """
    xy = [(0.5, 1.0), (0.5, -1.0), (0.0, 0.0), (1.0, 0.0)]
    edges = [(0, 2), (0, 3), (2, 3), (1, 2), (1, 3)]
    faces = [(0, 1, 2), (2, 3, 4)]
    return build_mesh(xy, [edges, faces])


def tetrahedron() -> Mesh:
    x = np.array([(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)], dtype=float) / (2 * np.sqrt(2))
    return polyhedron_mesh(x, [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])


def square_pyramid() -> Mesh:
    x = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0.5, 0.5, 1.0)]
    return polyhedron_mesh(x, [(0, 1, 2, 3), (0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)])


def bow_tie() -> Mesh:
    """Two triangles touching only at node 0."""
    return polygon_mesh([(0, 0), (-1, 1), (-1, -1), (1, 1), (1, -1)], [(0, 1, 2), (0, 3, 4)])
