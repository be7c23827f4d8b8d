"""Shared fixtures; acceptance verdict lines are printed in the terminal summary."""

import pytest

from experiments import C4_SPEC, Runs
from kanad.pipeline import synthesize

VERDICTS = {}


@pytest.fixture
def verdict():
    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        VERDICTS[number] = line
        print(line)
        return passed

    return record


@pytest.fixture(scope="session")
def c4_series():
    return synthesize(C4_SPEC)


@pytest.fixture(scope="session")
def c4_runs(c4_series):
    """Five default-config runs (model seeds 0-4) on the criterion-4 synthetic."""
    return Runs(c4_series)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[number])
