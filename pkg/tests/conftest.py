import pytest

from femtocac import preset


@pytest.fixture
def table1():
    return preset("table1")


@pytest.fixture
def desk():
    return preset("desk")


# lines recorded by the acceptance tests, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
