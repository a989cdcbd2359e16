"""Shared test configuration.

Hypothesis runs without per-example deadlines (several properties drive
whole simulators), and the acceptance suite collects one verdict line
per criterion which is echoed in the terminal summary so pass/fail is
visible without -s.
"""

import pytest
from hypothesis import settings

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")

_acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Append 'criterion N: PASS/FAIL - detail' lines here."""
    return _acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
