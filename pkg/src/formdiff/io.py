"""Mesh files, run configuration and result tables."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigError, ParseError, UnsupportedSection
from .forman import FormanComplex
from . import generators
from .mesh import Mesh, build_mesh

FORMAT_NAME = "formdiff-mesh"
FORMAT_VERSION = 1

_SKIPPED_TESS_SECTIONS = {"format", "general", "cell", "domain", "periodicity", "scale", "seed", "ori"}


# -- tessellation files ------------------------------------------------------

class _Lines:
    """Non-blank lines with their 1-based line numbers."""

    def __init__(self, text: str):
        self.items = [(k, line.split()) for k, line in enumerate(text.splitlines(), start=1) if line.strip()]
        self.pos = 0

    def peek(self) -> tuple[int, list[str]] | None:
        return self.items[self.pos] if self.pos < len(self.items) else None

    def next(self, what: str) -> tuple[int, list[str]]:
        if self.pos >= len(self.items):
            last = self.items[-1][0] if self.items else 0
            raise ParseError(f"unexpected end of file while reading {what}", last + 1)
        item = self.items[self.pos]
        self.pos += 1
        return item


def _ints(tokens: list[str], line: int, what: str) -> list[int]:
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise ParseError(f"expected integers in {what}", line) from None


def _floats(tokens: list[str], line: int, what: str) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError(f"expected numbers in {what}", line) from None


def _count(lines: _Lines, what: str) -> int:
    line, tokens = lines.next(f"{what} count")
    if len(tokens) != 1:
        raise ParseError(f"expected a single {what} count", line)
    return _ints(tokens, line, f"{what} count")[0]


def _list(tokens: list[str], start: int, line: int, what: str) -> tuple[list[int], int]:
    """Read 'n v1 ... vn' starting at tokens[start]; returns values and next index."""
    if start >= len(tokens):
        raise ParseError(f"missing {what} list", line)
    n = _ints([tokens[start]], line, what)[0]
    vals = tokens[start + 1:start + 1 + n]
    if len(vals) != n:
        raise ParseError(f"{what} list is shorter than declared", line)
    return _ints(vals, line, what), start + 1 + n


def parse_tess(text: str) -> dict:
    """Parse the vertex, edge, face and polyhedron sections of a tessellation."""
    lines = _Lines(text)
    out: dict = {}
    while lines.peek() is not None:
        line, tokens = lines.next("section header")
        head = tokens[0]
        if head.startswith("***"):
            continue
        if not head.startswith("**"):
            raise ParseError(f"expected a section header, got {tokens[0]!r}", line)
        name = head[2:]
        if name in _SKIPPED_TESS_SECTIONS:
            while lines.peek() is not None and not lines.peek()[1][0].startswith("**"):
                lines.next(name)
            continue
        if name == "vertex":
            n = _count(lines, "vertex")
            ids, xyz = [], []
            for _ in range(n):
                ln, tk = lines.next("vertex")
                if len(tk) < 4:
                    raise ParseError("vertex line needs an id and three coordinates", ln)
                ids.append(_ints(tk[:1], ln, "vertex id")[0])
                xyz.append(_floats(tk[1:4], ln, "vertex coordinates"))
            out["vertex"] = (ids, np.array(xyz, dtype=float).reshape(-1, 3))
        elif name == "edge":
            n = _count(lines, "edge")
            ids, ends = [], []
            for _ in range(n):
                ln, tk = lines.next("edge")
                if len(tk) < 3:
                    raise ParseError("edge line needs an id and two vertices", ln)
                vals = _ints(tk[:3], ln, "edge")
                ids.append(vals[0])
                ends.append(vals[1:3])
            out["edge"] = (ids, ends)
        elif name == "face":
            n = _count(lines, "face")
            ids, edges = [], []
            for _ in range(n):
                ln, tk = lines.next("face")
                ids.append(_ints(tk[:1], ln, "face id")[0])
                _list(tk, 1, ln, "face vertex")
                ln, tk = lines.next("face edges")
                fe, _ = _list(tk, 0, ln, "face edge")
                edges.append([abs(e) for e in fe])
                lines.next("face equation")
                lines.next("face state")
            out["face"] = (ids, edges)
        elif name == "polyhedron":
            n = _count(lines, "polyhedron")
            ids, faces = [], []
            for _ in range(n):
                ln, tk = lines.next("polyhedron")
                ids.append(_ints(tk[:1], ln, "polyhedron id")[0])
                pf, _ = _list(tk, 1, ln, "polyhedron face")
                faces.append([abs(f) for f in pf])
            out["polyhedron"] = (ids, faces)
        else:
            raise UnsupportedSection(f"unsupported section {head!r}", line)
    for needed in ("vertex", "edge", "face"):
        if needed not in out:
            raise ParseError(f"missing **{needed} section")
    return out


def import_tess(path) -> Mesh:
    """Read a tessellation file into a mesh (0-based, ids renumbered in file order)."""
    data = parse_tess(Path(path).read_text())

    def index(ids):
        return {k: i for i, k in enumerate(ids)}

    vid, xyz = data["vertex"]
    vmap = index(vid)
    eid, ends = data["edge"]
    emap = index(eid)
    fid, fedges = data["face"]
    fmap = index(fid)
    try:
        tables = [[[vmap[v] for v in e] for e in ends], [[emap[e] for e in f] for f in fedges]]
        if "polyhedron" in data:
            tables.append([[fmap[f] for f in p] for p in data["polyhedron"][1]])
    except KeyError as exc:
        raise ParseError(f"reference to undeclared id {exc.args[0]}") from None
    if "polyhedron" not in data and np.allclose(xyz[:, 2], xyz[0, 2]):
        xyz = xyz[:, :2]
    return build_mesh(xyz, tables)


# -- interchange format ------------------------------------------------------

def mesh_to_dict(mesh: Mesh) -> dict:
    cells = {}
    for p in range(1, mesh.dim + 1):
        inc = mesh.incidence(p).tocsc()
        inc.sort_indices()
        cells[str(p)] = [inc.indices[inc.indptr[j]:inc.indptr[j + 1]].tolist() for j in range(inc.shape[1])]
    return {"format": FORMAT_NAME, "version": FORMAT_VERSION, "embedding_dim": mesh.embedding_dim,
            "vertices": mesh.vertices.tolist(), "cells": cells}


def export_mesh(mesh: Mesh, path) -> None:
    Path(path).write_text(json.dumps(mesh_to_dict(mesh)))


def mesh_from_dict(data: dict) -> Mesh:
    if data.get("format") != FORMAT_NAME:
        raise ParseError(f"not a {FORMAT_NAME} file")
    if data.get("version") != FORMAT_VERSION:
        raise ParseError(f"unsupported format version {data.get('version')}")
    vertices = np.asarray(data["vertices"], dtype=float).reshape(-1, int(data["embedding_dim"]))
    cells = data["cells"]
    tables = [cells[str(p)] for p in range(1, len(cells) + 1)]
    return build_mesh(vertices, tables)


def import_mesh(path) -> Mesh:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from None
    return mesh_from_dict(data)


def export_subdivision(fc: FormanComplex, path) -> Path:
    """Write K in the interchange format plus a CSV mapping K-cells to M-pairs."""
    path = Path(path)
    export_mesh(fc.k.mesh, path)
    sidecar = path.with_suffix(".pairs.csv")
    with open(sidecar, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k_dim", "k_index", "top_dim", "top_index", "bottom_dim", "bottom_index"])
        for k in range(fc.dim + 1):
            for i, (top, bottom) in enumerate(fc.pairs(k)):
                c, b = fc.cell_of_gid(top), fc.cell_of_gid(bottom)
                w.writerow([k, i, c.dim, c.index, b.dim, b.index])
    return sidecar


NAMED_MESHES = {
    "two-triangles": generators.two_triangles,
    "tetrahedron": generators.tetrahedron,
    "pyramid": generators.square_pyramid,
    "bow-tie": generators.bow_tie,
    "torus": generators.torus_surface,
    "annulus": generators.annulus,
    "mobius": generators.mobius_strip,
}


def load_mesh(source: str) -> Mesh:
    """Mesh from a file (.tess or interchange JSON) or a built-in source.

    Built-ins: ``grid:N`` (unit cube, N^3 cells), ``grid2d:N``,
    ``interval:N`` and the names in NAMED_MESHES.
    """
    kind, _, arg = source.partition(":")
    if arg and kind in ("grid", "grid2d", "interval"):
        try:
            n = int(arg)
        except ValueError:
            raise ConfigError(f"bad mesh size in {source!r}") from None
        if kind == "interval":
            return generators.interval_mesh(n)
        return generators.generate_regular_grid(n, dim=2 if kind == "grid2d" else 3)
    if source in NAMED_MESHES:
        return NAMED_MESHES[source]()
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"mesh source {source!r} is neither a file nor a built-in mesh")
    if path.suffix == ".tess":
        return import_tess(path)
    return import_mesh(path)


# -- run configuration ---------------------------------------------------------

@dataclass
class RunConfig:
    values: dict[str, str] = field(default_factory=dict)

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def require(self, key: str) -> str:
        if key not in self.values:
            raise ConfigError(f"missing required setting {key!r}")
        return self.values[key]

    def float(self, key: str, default: float | None = None) -> float | None:
        v = self.values.get(key)
        if v is None:
            return default
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {v!r}") from None

    def int(self, key: str, default: int | None = None) -> int | None:
        v = self.float(key, None)
        return default if v is None else int(v)

    def floats(self, key: str) -> list[float] | None:
        v = self.values.get(key)
        if v is None:
            return None
        try:
            return [float(t) for t in v.replace(",", " ").split()]
        except ValueError:
            raise ConfigError(f"{key} must be a list of numbers") from None


def parse_config(text: str) -> RunConfig:
    """'key = value' lines; '#' starts a comment."""
    values = {}
    for k, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {k}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return RunConfig(values)


def read_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


# -- tables ----------------------------------------------------------------------

def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def node_rows(fc: FormanComplex, u: np.ndarray) -> Iterator[list]:
    pos = fc.node_positions
    dims = fc.node_origin_dims
    for i in range(len(u)):
        x = list(pos[i]) + [0.0] * (3 - pos.shape[1])
        yield [i, *(f"{v:.12g}" for v in x[:3]), int(dims[i]), f"{u[i]:.15g}"]
