import numpy as np
import pytest

from taskgemm.execution import physical_cores

CORES = physical_cores()


def requires_cores(n):
    """Skip a timing check whose premise is that n lanes can run in parallel."""
    return pytest.mark.skipif(
        CORES < n, reason=f"needs >= {n} physical cores for parallel speedup, host has {CORES}"
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# filled by test_acceptance; one line per criterion, echoed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
