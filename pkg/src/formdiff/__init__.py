"""Combinatorial differential forms on polytopal meshes and diffusion with
per-edge diffusivity on their Forman subdivisions."""

import os as _os

# FORMDIFF_THREADS caps the BLAS/OpenMP pools used by the factorisations
if "FORMDIFF_THREADS" in _os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["FORMDIFF_THREADS"])

from .errors import *  # noqa: E402,F401,F403
from .mesh import CellId, Mesh, ValidationReport, angle_measure, build_mesh, node_curvature, validate  # noqa: E402
from .generators import generate_regular_grid  # noqa: E402
from .orientation import (Chain, Cochain, OrientedComplex, betti_numbers, evaluate,  # noqa: E402
                          fundamental_class, orient_compatibly, relative_orientation)
from .forman import Form, FormanComplex, exterior_derivative, forman_iso, forman_iso_inv, forman_subdivide  # noqa: E402
from .algebra import cup, wedge  # noqa: E402
from .metric import (MetricContext, adjoint_coboundary, build_metric, hodge_report, hodge_star,  # noqa: E402
                     inner_product, laplacian_0, riemann_integral)
from .diffusion import (BoundaryConditionSet, DiffusivityAssignment, EdgeClass, apply_boundary_conditions,  # noqa: E402
                        boundary_flux, diffusion_system, edge_flux, effective_diffusivity, run_slab,
                        solve_steady, step_transient, uniform_diffusivity)
from .composites import InclusionStudy, PercolationCurve, assign_inclusions, percolation_sweep  # noqa: E402
from .io import export_mesh, import_mesh, import_tess, load_mesh  # noqa: E402

__version__ = "0.1.0"
