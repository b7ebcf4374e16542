import sys
import numpy as np
import pytest
from hypothesis import settings

from svlm.grid import build_grid, reference_grid

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def ref_grid():
    return reference_grid()


def single_site(d, var=1.0):
    return build_grid([0.0], [1.0], [d], [[var]])


def two_sites(d0, d1, rho=0.5, var=(1.0, 1.0)):
    s0, s1 = np.sqrt(var)
    return build_grid([0.0, 1.0], [0.5, 0.5], [d0, d1],
                      [[var[0], rho * s0 * s1], [rho * s0 * s1, var[1]]])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
