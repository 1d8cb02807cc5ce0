import numpy as np
import pytest

from llg_imex.demag import StrayFieldSolver
from llg_imex.fem import FESpace
from llg_imex.mesh import TetMesh, build_box_mesh

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ref_tet():
    return TetMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], [[0, 1, 2, 3]])


@pytest.fixture(scope="session")
def cube1():
    return build_box_mesh(1, 1, 1)


@pytest.fixture(scope="session")
def cube4_space():
    return FESpace(build_box_mesh(4, 4, 4))


@pytest.fixture(scope="session")
def cube4_stray(cube4_space):
    return StrayFieldSolver(cube4_space)


@pytest.fixture(scope="session")
def cube8_space():
    return FESpace(build_box_mesh(8, 8, 8))


@pytest.fixture(scope="session")
def cube8_stray(cube8_space):
    return StrayFieldSolver(cube8_space)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
