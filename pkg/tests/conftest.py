import numpy as np
import pytest

from nonholo.sampling import sample_initial_state
from nonholo.systems import get_system


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


@pytest.fixture(scope="session")
def chaotic():
    return get_system("chaotic-quartic")


@pytest.fixture(scope="session")
def chaotic_start(chaotic):
    """Constrained (q, p) with H = 3.06."""
    return sample_initial_state(chaotic, seed=1, target_energy=3.06)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
