import numpy as np
import pytest

from geolangevin.geometry import manifold_by_name
from geolangevin.potentials import potential_by_name

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def sphere():
    return manifold_by_name("sphere2")


@pytest.fixture(scope="session")
def torus():
    return manifold_by_name("flat_torus2")


@pytest.fixture(scope="session")
def plane():
    return manifold_by_name("euclidean", d=2)


@pytest.fixture(scope="session")
def line():
    return manifold_by_name("euclidean", d=1)


@pytest.fixture(scope="session")
def sheet():
    return manifold_by_name("graph_surface", height="sine_sheet")


@pytest.fixture(scope="session")
def bowl():
    return manifold_by_name("graph_surface", height="paraboloid")


@pytest.fixture(scope="session")
def torus_zero(torus):
    return potential_by_name(torus, "zero")
