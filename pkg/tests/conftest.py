import numpy as np
import pytest

from persuade.sim import gen_example_basic


@pytest.fixture
def basic():
    return gen_example_basic()


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_terminal_summary(terminalreporter):
    from tests import acceptance_report

    if acceptance_report.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_report.LINES:
            terminalreporter.write_line(line)
