from pathlib import Path

import numpy as np
import pytest

from formdiff import generators
from formdiff.forman import forman_subdivide
from formdiff.metric import build_metric
from formdiff.orientation import orient_compatibly

DATA = Path(__file__).parent / "data"


def subdivide(mesh):
    return forman_subdivide(orient_compatibly(mesh))


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def two_triangles():
    return generators.two_triangles()


@pytest.fixture(scope="session")
def cube():
    return generators.generate_regular_grid(1)


@pytest.fixture(scope="session")
def grid2():
    return generators.generate_regular_grid(2)


@pytest.fixture(scope="session")
def torus():
    return generators.torus_surface()


@pytest.fixture(scope="session")
def annulus():
    return generators.annulus()


@pytest.fixture(scope="session")
def fc_two_triangles(two_triangles):
    return subdivide(two_triangles)


@pytest.fixture(scope="session")
def fc_cube(cube):
    return subdivide(cube)


@pytest.fixture(scope="session")
def fc_grid2(grid2):
    return subdivide(grid2)


@pytest.fixture(scope="session")
def fc_torus(torus):
    return subdivide(torus)


@pytest.fixture(scope="session")
def fc_annulus(annulus):
    return subdivide(annulus)


@pytest.fixture(scope="session")
def fc_tet():
    return subdivide(generators.tetrahedron())


@pytest.fixture(scope="session")
def complexes(fc_two_triangles, fc_grid2, fc_torus, fc_annulus, fc_tet):
    """Named subdivisions used by the identity checks."""
    return {"two-triangles": fc_two_triangles, "grid2": fc_grid2, "torus": fc_torus,
            "annulus": fc_annulus, "tetrahedron": fc_tet}


@pytest.fixture(scope="session")
def metrics(complexes):
    return {name: build_metric(fc) for name, fc in complexes.items()}


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
