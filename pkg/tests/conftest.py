import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from edgempc import mpc  # noqa: E402
from edgempc.dynamics import ModelParams  # noqa: E402


@pytest.fixture(scope="session", autouse=True)
def _compiled():
    mpc.warmup()


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# lines appended by test_acceptance; echoed after the run so they survive capture
ACCEPTANCE_LINES: list[tuple[int, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
