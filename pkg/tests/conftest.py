import numpy as np
import pytest

SEED = 42


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


# one line per acceptance criterion, printed at the end of every session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
