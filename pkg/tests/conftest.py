"""Shared fixtures plus the acceptance-summary hook.

The acceptance module appends one verdict line per criterion to the session
list below; the terminal-summary hook echoes those lines after the run so
they are visible even under output capture.
"""

import pytest

from snsqkd import preset_device

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture()
def table1():
    """Benchmark device factory: table1 preset at a chosen distance."""
    def make(distance_km: float):
        return preset_device("table1", distance_km=distance_km)
    return make
