"""Command-line entry point.

    formdiff COMMAND [--mesh SRC] [--config FILE] [--out DIR] [--seed N]
                     [--curvature {trivial,curvature}] [--tol X]

Commands: validate, subdivide, betti, hodge-check, solve, alpha-eff, percolate.
Settings come from the run configuration (``key = value`` lines) and are
overridden by the flags.  Recognised keys:

    mesh, curvature, tol, seed, solver, out
    alpha                      uniform diffusivity
    alpha.node_edge, alpha.edge_face, alpha.face_volume
    axis, u_low, u_high        slab experiments (axis is x, y, z or 0..2)
    bc.NAME = AXIS VALUE U     Dirichlet plane, e.g. bc.bottom = z 0 0
    flux.NAME = AXIS VALUE F   total outward flux through a plane
    kind, paths, fractions, matrix_alpha, inclusion_alpha   percolation
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .composites import InclusionStudy, percolation_sweep
from .diffusion import (BoundaryConditionSet, EdgeClass, apply_boundary_conditions, boundary_flux_by_class,
                        diffusion_system, plane_nodes, run_slab, solve_steady, uniform_diffusivity)
from .errors import ConfigError, FormDiffError
from .forman import forman_subdivide
from .mesh import validate
from .metric import build_metric, hodge_report
from .orientation import betti_numbers, orient_compatibly

log = logging.getLogger("formdiff")

COMMANDS = ("validate", "subdivide", "betti", "hodge-check", "solve", "alpha-eff", "percolate")
AXES = {"x": 0, "y": 1, "z": 2}
CLASS_KEYS = {"node_edge": EdgeClass.NODE_EDGE, "edge_face": EdgeClass.EDGE_FACE,
              "face_volume": EdgeClass.FACE_VOLUME}


def _axis(text: str) -> int:
    text = text.strip().lower()
    if text in AXES:
        return AXES[text]
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"bad axis {text!r}") from None


def _plane(entry: str, key: str) -> tuple[int, float, float]:
    parts = entry.split()
    if len(parts) != 3:
        raise ConfigError(f"{key} needs 'axis coordinate value', got {entry!r}")
    try:
        return _axis(parts[0]), float(parts[1]), float(parts[2])
    except ValueError:
        raise ConfigError(f"{key}: coordinate and value must be numbers") from None


def _diffusivity(fc, cfg: io.RunConfig):
    per_class = {cls: cfg.float(f"alpha.{name}") for name, cls in CLASS_KEYS.items()}
    if any(v is not None for v in per_class.values()):
        base = cfg.float("alpha", 1.0)
        return uniform_diffusivity(fc, {cls: base if v is None else v for cls, v in per_class.items()})
    return uniform_diffusivity(fc, cfg.float("alpha", 1.0))


def _out_dir(cfg: io.RunConfig) -> Path:
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


class Pipeline:
    """Lazily built mesh, oriented complex, subdivision and metric."""

    def __init__(self, cfg: io.RunConfig):
        self.cfg = cfg
        self._mesh = self._oc = self._fc = self._mc = None

    @property
    def mesh(self):
        if self._mesh is None:
            t = time.perf_counter()
            self._mesh = io.load_mesh(self.cfg.require("mesh"))
            log.info("mesh %s loaded: cells %s (%.2f s)", self.cfg.get("mesh"), self._mesh.counts,
                     time.perf_counter() - t)
        return self._mesh

    @property
    def oriented(self):
        if self._oc is None:
            self._oc = orient_compatibly(self.mesh)
        return self._oc

    @property
    def subdivision(self):
        if self._fc is None:
            t = time.perf_counter()
            self._fc = forman_subdivide(self.oriented)
            log.info("subdivision: cells %s (%.2f s)", self._fc.counts, time.perf_counter() - t)
        return self._fc

    @property
    def metric(self):
        if self._mc is None:
            self._mc = build_metric(self.subdivision, self.cfg.get("curvature", "curvature"))
        return self._mc


def cmd_validate(pipe: Pipeline) -> int:
    report = validate(pipe.mesh)
    print(f"manifold-like: {'yes' if report.is_manifold_like else 'no'}")
    for p, ok in sorted(report.is_p_regular.items()):
        print(f"{p}-regular: {'yes' if ok else 'no'}")
    print(f"cubical corners: {'yes' if report.has_cubical_corners else 'no'}")
    print(f"boundary cells: {len(report.boundary_cell_ids)}")
    for name, cells in report.failures:
        shown = ", ".join(f"{c.dim}:{c.index}" for c in cells[:10])
        more = f" (+{len(cells) - 10} more)" if len(cells) > 10 else ""
        print(f"failure: {name}: {shown}{more}")
    return 0 if report.ok else 1


def cmd_subdivide(pipe: Pipeline) -> int:
    fc = pipe.subdivision
    print(",".join(str(n) for n in fc.counts))
    if pipe.cfg.get("out") is not None:
        target = _out_dir(pipe.cfg) / "subdivision.json"
        sidecar = io.export_subdivision(fc, target)
        log.info("wrote %s and %s", target, sidecar)
    return 0


def cmd_betti(pipe: Pipeline) -> int:
    print(",".join(str(b) for b in betti_numbers(pipe.oriented)))
    return 0


def cmd_hodge_check(pipe: Pipeline) -> int:
    report = hodge_report(pipe.metric, seed=pipe.cfg.int("seed", 0))
    rows = []
    for p, (k, b) in enumerate(zip(report.kernel_dims, report.betti)):
        rows.append([p, k, b, f"{report.residuals[p]:.3e}", f"{report.orthogonality[p]:.3e}"])
        print(f"degree {p}: kernel {k}, betti {b}, residual {report.residuals[p]:.2e}, "
              f"orthogonality {report.orthogonality[p]:.2e}")
    if pipe.cfg.get("out") is not None:
        io.write_csv(_out_dir(pipe.cfg) / "hodge.csv",
                     ["degree", "kernel_dim", "betti", "residual", "orthogonality"], rows)
    return 0 if report.consistent else 1


def _boundary_conditions(pipe: Pipeline) -> BoundaryConditionSet:
    cfg, fc = pipe.cfg, pipe.subdivision
    dirichlet: dict[int, float] = {}
    neumann: dict[int, float] = {}
    surfaces = {}
    weights = pipe.metric.weights[0]
    for key, entry in cfg.values.items():
        if key.startswith("bc."):
            axis, coord, value = _plane(entry, key)
            nodes = plane_nodes(fc, axis, coord)
            if nodes.size == 0:
                raise ConfigError(f"{key}: no nodes on the plane")
            for i in nodes:
                if int(i) in dirichlet and dirichlet[int(i)] != value:
                    raise ConfigError(f"{key}: node {int(i)} already has a different value")
                dirichlet[int(i)] = value
            surfaces[key[3:]] = nodes
    for key, entry in cfg.values.items():
        if key.startswith("flux."):
            axis, coord, total = _plane(entry, key)
            nodes = np.array([i for i in plane_nodes(fc, axis, coord) if int(i) not in dirichlet], dtype=np.int64)
            if nodes.size == 0:
                raise ConfigError(f"{key}: no free nodes on the plane")
            # the total is shared in proportion to the nodes' 0-cochain weights
            share = weights[nodes] / weights[nodes].sum()
            for i, s in zip(nodes, share):
                neumann[int(i)] = neumann.get(int(i), 0.0) + total * s
            surfaces[key[5:]] = nodes
    if not dirichlet:
        raise ConfigError("solve needs at least one bc.NAME = AXIS VALUE U entry")
    return BoundaryConditionSet(dirichlet, neumann, surfaces)


def cmd_solve(pipe: Pipeline) -> int:
    cfg = pipe.cfg
    mc = pipe.metric
    da = _diffusivity(pipe.subdivision, cfg)
    bc = _boundary_conditions(pipe)
    t = time.perf_counter()
    reduced = apply_boundary_conditions(diffusion_system(mc, da), bc)
    sol = solve_steady(reduced, tol=cfg.float("tol", 1e-10), method=cfg.get("solver", "auto"))
    log.info("steady solve: residual %.3e, %d iterations (%.2f s)", sol.residual, sol.iterations,
             time.perf_counter() - t)
    out = _out_dir(cfg)
    io.write_csv(out / "nodes.csv", ["id", "x", "y", "z", "origin_dim", "u"], io.node_rows(pipe.subdivision, sol.u))
    rows = []
    for name, nodes in bc.surfaces.items():
        parts = boundary_flux_by_class(mc, da, sol.u, nodes)
        rows.append([name, f"{sol.boundary_flux[name]:.12g}"]
                    + [f"{parts.get(cls, 0.0):.12g}" for cls in EdgeClass])
        print(f"{name}: flux {sol.boundary_flux[name]:.10g}")
    io.write_csv(out / "flux.csv", ["surface", "total", "node_edge", "edge_face", "face_volume"], rows)
    return 0


def cmd_alpha_eff(pipe: Pipeline) -> int:
    cfg = pipe.cfg
    mc = pipe.metric
    da = _diffusivity(pipe.subdivision, cfg)
    axis = _axis(cfg.get("axis", str(pipe.mesh.embedding_dim - 1)))
    t = time.perf_counter()
    res = run_slab(mc, da, axis=axis, u_low=cfg.float("u_low", 0.0), u_high=cfg.float("u_high", 1.0),
                   tol=cfg.float("tol", 1e-10), method=cfg.get("solver", "auto"))
    log.info("slab solve: residual %.3e (%.2f s)", res.residual, time.perf_counter() - t)
    print(f"alpha_eff {res.alpha_eff:.10g}")
    io.write_csv(_out_dir(cfg) / "alpha_eff.csv",
                 ["axis", "flux_low", "flux_high", "alpha_eff"],
                 [[axis, f"{res.flux_low:.10g}", f"{res.flux_high:.10g}", f"{res.alpha_eff:.10g}"]])
    return 0


def cmd_percolate(pipe: Pipeline) -> int:
    cfg = pipe.cfg
    fractions = cfg.floats("fractions")
    if fractions is None:
        fractions = list(np.linspace(0.0, 1.0, 51))
    elif len(fractions) == 1:
        fractions = list(np.linspace(0.0, 1.0, int(fractions[0])))
    study = InclusionStudy(
        kind=cfg.get("kind", "GNP"),
        matrix_alpha=cfg.float("matrix_alpha", 1e-10),
        inclusion_alpha=cfg.float("inclusion_alpha", 1.0),
        fractions=fractions,
        paths=cfg.int("paths", 200),
        seed=cfg.int("seed", 0),
        axis=_axis(cfg.get("axis", str(pipe.mesh.embedding_dim - 1))),
        tol=cfg.float("tol", 1e-10),
    )
    t = time.perf_counter()
    curve = percolation_sweep(study, pipe.metric)
    log.info("%s sweep: %d paths x %d fractions, %d failed solves (%.1f s)", study.kind, study.paths,
             len(study.fractions), int(curve.n_failed.sum()), time.perf_counter() - t)
    target = _out_dir(cfg) / f"percolation_{study.kind.lower()}.csv"
    curve.write_csv(target)
    frac, measure = curve.steepest_rise()
    print(f"steepest rise at fraction {frac:.4g}, cumulative measure {measure:.4g}")
    return 0


HANDLERS = {
    "validate": cmd_validate,
    "subdivide": cmd_subdivide,
    "betti": cmd_betti,
    "hodge-check": cmd_hodge_check,
    "solve": cmd_solve,
    "alpha-eff": cmd_alpha_eff,
    "percolate": cmd_percolate,
}


def run(command: str, cfg: io.RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    if command not in HANDLERS:
        raise ConfigError(f"unknown command {command!r}")
    return HANDLERS[command](Pipeline(cfg))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="formdiff", description="Combinatorial differential forms and diffusion.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--mesh", help="mesh file (.tess or .json) or built-in: grid:N, grid2d:N, interval:N, "
                                   + ", ".join(io.NAMED_MESHES))
    ap.add_argument("--config", help="run configuration file")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--curvature", choices=("trivial", "curvature"))
    ap.add_argument("--tol", type=float)
    ap.add_argument("--quiet", action="store_true", help="only warnings and errors on stderr")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = io.read_config(args.config) if args.config else io.RunConfig()
        if args.config and "mesh" in cfg.values:
            # mesh files named in a config are relative to the config
            near = Path(args.config).parent / cfg.values["mesh"]
            if near.exists():
                cfg.values["mesh"] = str(near)
        for key in ("mesh", "out", "seed", "curvature", "tol"):
            value = getattr(args, key)
            if value is not None:
                cfg.values[key] = str(value)
        return run(args.command, cfg)
    except (FormDiffError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
