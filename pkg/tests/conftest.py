import numpy as np
import pytest
from hypothesis import settings

from twogrid.material import PoroelasticMaterial
from twogrid.mesh import TetMesh

settings.register_profile("default", max_examples=40, deadline=None)
settings.register_profile("stress", max_examples=1000, deadline=None)
settings.load_profile("default")

UNIT_TET = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


@pytest.fixture
def unit_tet():
    return UNIT_TET.copy()


@pytest.fixture
def unit_tet_mesh():
    return TetMesh(UNIT_TET.copy(), [[0, 1, 2, 3]])


@pytest.fixture
def rock():
    """Unit-scale material with moderate coupling."""
    return PoroelasticMaterial(E=1.0, nu=0.25, b=0.8, M=2.0, k=1.0, mu=1.0)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
