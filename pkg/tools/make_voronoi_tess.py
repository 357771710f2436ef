"""Write a clipped 3D Voronoi tessellation of the unit cube as a .tess file.

Used to produce the test fixtures in tests/data; not part of the library.

    python3 tools/make_voronoi_tess.py --cells 2500 --seed 1 --out tests/data/voronoi_2500.tess
"""

import argparse

import numpy as np
from scipy.spatial import Delaunay, HalfspaceIntersection, cKDTree

WALLS = [(-1, 0, 0, 0.0), (1, 0, 0, -1.0), (0, -1, 0, 0.0), (0, 1, 0, -1.0), (0, 0, -1, 0.0), (0, 0, 1, -1.0)]


def neighbours(seeds):
    tri = Delaunay(seeds)
    indptr, indices = tri.vertex_neighbor_vertices
    return [indices[indptr[i]:indptr[i + 1]] for i in range(len(seeds))]


def clipped_cells(seeds):
    """Per seed: list of (plane tag, vertex coordinates) for each face of its cell."""
    nbrs = neighbours(seeds)
    cells = []
    for i, s in enumerate(seeds):
        planes, tags = [], []
        for w, wall in enumerate(WALLS):
            planes.append(wall)
            tags.append(("wall", w))
        for j in nbrs[i]:
            normal = seeds[j] - s
            offset = -(seeds[j] @ seeds[j] - s @ s) / 2.0
            scale = np.linalg.norm(normal)
            planes.append((*(normal / scale), offset / scale))
            tags.append(("seed", int(j)))
        planes = np.array(planes, dtype=float)
        hs = HalfspaceIntersection(planes, s)
        pts = hs.intersections
        faces = []
        for k, tag in enumerate(tags):
            dist = np.abs(pts @ planes[k, :3] + planes[k, 3])
            on = pts[dist < 1e-10]
            if len(on) >= 3:
                faces.append((tag, on))
        cells.append(faces)
    return cells


def build(seeds, merge_tol=1e-9):
    cells = clipped_cells(seeds)
    raw = np.vstack([pts for faces in cells for _, pts in faces])
    tree = cKDTree(raw)
    parent = np.arange(len(raw))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in sorted(tree.query_pairs(merge_tol)):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(a) for a in range(len(raw))])
    uniq, vid = np.unique(roots, return_inverse=True)
    vertices = raw[uniq]

    faces: dict[tuple, list[int]] = {}
    face_cells: dict[tuple, list[int]] = {}
    cursor = 0
    for i, cell in enumerate(cells):
        for tag, pts in cell:
            ids = list(dict.fromkeys(vid[cursor:cursor + len(pts)].tolist()))
            cursor += len(pts)
            key = ("wall", i, tag[1]) if tag[0] == "wall" else ("pair", min(i, tag[1]), max(i, tag[1]))
            if len(ids) < 3:
                continue
            face_cells.setdefault(key, []).append(i)
            if key in faces:
                if set(faces[key]) != set(ids):
                    raise RuntimeError(f"face {key} seen with different vertices")
                continue
            p = vertices[ids]
            centre = p.mean(axis=0)
            normal = np.linalg.svd(p - centre)[2][2]
            u = p[0] - centre
            u /= np.linalg.norm(u)
            v = np.cross(normal, u)
            angle = np.arctan2((p - centre) @ v, (p - centre) @ u)
            faces[key] = [ids[k] for k in np.argsort(angle)]
    edges: dict[tuple, int] = {}
    face_list, face_edges = [], []
    for key, loop in faces.items():
        if key[0] == "pair" and len(face_cells[key]) != 2:
            raise RuntimeError(f"interior face {key} found by {len(face_cells[key])} cells")
        fe = []
        for k in range(len(loop)):
            e = tuple(sorted((loop[k], loop[(k + 1) % len(loop)])))
            fe.append(edges.setdefault(e, len(edges)))
        face_list.append((key, loop))
        face_edges.append(fe)
    polys = [[] for _ in seeds]
    for f, (key, _) in enumerate(face_list):
        for c in face_cells[key]:
            polys[c].append(f)
    return vertices, sorted(edges, key=edges.get), face_list, face_edges, polys


def write_tess(path, seeds, vertices, edges, faces, face_edges, polys):
    with open(path, "w") as fh:
        fh.write("***tess\n **format\n   3.4\n **general\n   3 standard\n **cell\n")
        fh.write(f"   {len(polys)}\n")
        fh.write(" **vertex\n")
        fh.write(f"{len(vertices)}\n")
        for k, x in enumerate(vertices, start=1):
            fh.write(f" {k} {x[0]:.15f} {x[1]:.15f} {x[2]:.15f} 0\n")
        fh.write(" **edge\n")
        fh.write(f"{len(edges)}\n")
        for k, (a, b) in enumerate(edges, start=1):
            fh.write(f" {k} {a + 1} {b + 1} 0\n")
        fh.write(" **face\n")
        fh.write(f"{len(faces)}\n")
        for k, ((_, loop), fe) in enumerate(zip(faces, face_edges), start=1):
            p = vertices[loop]
            normal = np.cross(p[1] - p[0], p[2] - p[0])
            normal /= np.linalg.norm(normal)
            fh.write(f" {k} {len(loop)} " + " ".join(str(v + 1) for v in loop) + "\n")
            fh.write(f"   {len(fe)} " + " ".join(str(e + 1) for e in fe) + "\n")
            fh.write(f"   {normal @ p[0]:.12f} {normal[0]:.12f} {normal[1]:.12f} {normal[2]:.12f}\n")
            fh.write("   0 0 0 0 0\n")
        fh.write(" **polyhedron\n")
        fh.write(f"{len(polys)}\n")
        for k, fs in enumerate(polys, start=1):
            fh.write(f" {k} {len(fs)} " + " ".join(str(f + 1) for f in fs) + "\n")
        fh.write("***end\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cells", type=int, default=2500)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    seeds = np.random.default_rng(args.seed).random((args.cells, 3))
    write_tess(args.out, seeds, *build(seeds))


if __name__ == "__main__":
    main()
