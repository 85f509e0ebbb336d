import numpy as np
import pytest

from covsteer.benchmarks import planar_example

_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_KEY] = []


@pytest.fixture
def acceptance_log(request):
    return request.config.stash[_KEY]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def planar():
    return planar_example()


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
