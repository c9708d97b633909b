import numpy as np
import pytest

from sdg_ibm import assembly
from sdg_ibm.mesh import build_mesh
from sdg_ibm.spaces import build_layouts


def make_core(N):
    mesh = build_mesh(N)
    return assembly.assemble_core(mesh, build_layouts(mesh))


@pytest.fixture(scope="session")
def core4():
    return make_core(4)


@pytest.fixture(scope="session")
def core8():
    return make_core(8)


@pytest.fixture(scope="session")
def mesh4(core4):
    return core4.mesh


def smooth_field(x):
    x = np.atleast_2d(x)
    return np.column_stack([np.sin(3.0 * x[:, 1]) + x[:, 0] ** 2, np.cos(2.0 * x[:, 0]) * x[:, 1]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
