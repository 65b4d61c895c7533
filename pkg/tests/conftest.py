import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vo2tcn.sim import generate_cohort  # noqa: E402


@pytest.fixture(scope="session")
def small_cohort():
    """Six noisy participants; enough for a 3/2/1-style split."""
    return generate_cohort(6, seed=3)


@pytest.fixture(scope="session")
def noiseless_cohort():
    return generate_cohort(4, seed=5, noise=False)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
