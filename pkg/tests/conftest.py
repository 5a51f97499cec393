import numpy as np
import pytest

from centerpercept.core import GridSpec


@pytest.fixture
def grid():
    return GridSpec(640, 320, 4)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
