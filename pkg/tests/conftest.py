import numpy as np
import pytest

from etdf import acceptance
from etdf.design import GainDesign, Gating, design_gains
from etdf.models import hopf_system
from etdf.ode import monodromy_uncontrolled

REPORTED_GAINS = np.array([-0.258, 4.786])

_acceptance_lines = []


@pytest.fixture(scope="session")
def hopf():
    """System, orbit and linearisation at p = -0.25."""
    return hopf_system(-0.25)


@pytest.fixture(scope="session")
def P0(hopf):
    return monodromy_uncontrolled(hopf[2])


@pytest.fixture(scope="session")
def K0(hopf, P0):
    return design_gains(P0, hopf[2].b(0.0), [0.5j, -0.5j])


@pytest.fixture(scope="session")
def time_design(hopf, K0):
    T = hopf[1].T
    return GainDesign(K0, T / 500, 0.04, rho=0.3, targets=(0.5j, -0.5j), gating=Gating.TIME)


@pytest.fixture(scope="session")
def state_design(time_design):
    return time_design.replace(gating=Gating.STATE)


@pytest.fixture(scope="session")
def bench():
    """Shared benchmark context; the expensive spectrum is computed once."""
    return acceptance.Benchmark()


@pytest.fixture(scope="session")
def record_acceptance():
    return _acceptance_lines.append


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
