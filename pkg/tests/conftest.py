"""Shared test plumbing: the acceptance checklist summary.

Acceptance tests record one entry per criterion through the
``acceptance_log`` fixture; after the run pytest prints a single
PASS/FAIL line for each recorded criterion.
"""

import pytest

_RESULTS = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return _RESULTS


def record(log, number, name, ok, detail):
    """Store one criterion outcome, then assert it."""
    log[number] = (name, bool(ok), detail)
    assert ok, f"criterion {number} ({name}): {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        name, ok, detail = _RESULTS[number]
        flag = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {flag} [{name}] {detail}")
