import numpy as np
import pytest

from micropolar_sn.basis import build_basis
from micropolar_sn.config import build_scenario, load_config
from micropolar_sn.fields import CoefficientFields, VectorField
from micropolar_sn.functionals import CostWeights
from micropolar_sn.geometry import default_geometry
from micropolar_sn.motion import MotionLaw
from micropolar_sn.state import Context, TimeGrid

TINY_M = [[1.0, 0.2], [0.1, 1.0]]
TINY_FIELDS = (("0.5*sin(pi*y1)*sin(pi*y2)", "0.3"), "sin(pi*y1)*sin(2*pi*y2)")

ACCEPTANCE_LINES = []


def make_tiny_ctx(coupling=True, fields=True, motion=None):
    motion = motion or MotionLaw("affine", (1.0, 0.5), TINY_M, 1.0)
    F = CoefficientFields(VectorField(*TINY_FIELDS[0]), TINY_FIELDS[1]) if fields else None
    return Context(build_basis(2, motion.M), default_geometry(points=4, max_cell_width=0.5),
                   motion, TimeGrid(4, 1.0), F, coupling)


def make_tiny_weights(**changes):
    n = 4
    base = dict(alpha=(2.0, 1.0), mu=(0.5, 0.7), alpha_tilde=(1.5, 0.5), mu_tilde=(0.3, 0.9),
                z_d=[("sin(pi*y1)", "t"), ("1", "0")], w_d=["cos(pi*y2)", "y1*t"],
                z_T=np.r_[0.1, np.zeros(n - 1)], w_T=np.r_[0.4, np.zeros(n - 1)], eps=0.1)
    base.update(changes)
    return CostWeights(**base)


@pytest.fixture(scope="session")
def tiny_ctx():
    return make_tiny_ctx()


@pytest.fixture
def tiny_weights():
    return make_tiny_weights()


@pytest.fixture(scope="session")
def default_scenario():
    return build_scenario(load_config())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
