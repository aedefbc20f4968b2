import pytest

from eshmem import Mode, build_machine

# PASS/FAIL lines recorded by the acceptance tests, echoed in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def timed():
    return build_machine(mode=Mode.TIMED)


@pytest.fixture
def functional():
    return build_machine(mode=Mode.FUNCTIONAL)
