import numpy as np
import pytest

from confnet.channel import ChannelParams
from confnet.topology import diamond_single, diamond_shared, enumerate_active_sets, link_tables

TABLE_GAINS = (6.0, 8.0, 10.0, 4.0, 8.0, 6.0, 4.0, 6.0)


@pytest.fixture(scope="session")
def shared():
    return diamond_shared()


@pytest.fixture(scope="session")
def diamond():
    return diamond_single()


@pytest.fixture(scope="session")
def shared_tables(shared):
    return link_tables(shared, enumerate_active_sets(shared))


@pytest.fixture(scope="session")
def shared_channel():
    return ChannelParams(gains=TABLE_GAINS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
