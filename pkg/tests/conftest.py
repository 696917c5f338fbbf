import numpy as np
import pytest

from eqmanifold import builtin


@pytest.fixture(scope="session")
def driftsing():
    return builtin("driftsing")


@pytest.fixture(scope="session")
def transcritical():
    return builtin("transcritical")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one summary line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
