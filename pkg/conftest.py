"""Shared fixtures and the slow/extended gates"""

import os

import pytest

from rtep.services.netcase import load_bundled_case, parse_case_text

RUN_SLOW = os.getenv("RTEP_RUN_SLOW") == "1"
RUN_EXTENDED = os.getenv("RTEP_RUN_EXTENDED") == "1"

TWO_BUS = """
[system]
name = "two_bus"
angle_ref_bus = 1

[[bus]]
id = 1

[[bus]]
id = 2
p_load = 0.5
q_over_p = 0.2

[[gen]]
bus = 1
p_max = 1.0
q_min = -1.0
q_max = 1.0
cost_a = 0.1
cost_b = 0.05

[[line0]]
from = 1
to = 2
g = 0.990099
b = -9.90099
p_max = 1.0

[[candidate]]
from = 1
to = 2
n_max = 1
g = 0.990099
b = -9.90099
p_max = 1.0
install_cost = 0.5
"""


def pytest_collection_modifyitems(config, items):
    skip_slow = pytest.mark.skip(reason="set RTEP_RUN_SLOW=1 to run")
    skip_extended = pytest.mark.skip(reason="set RTEP_RUN_EXTENDED=1 to run")
    for item in items:
        if "slow" in item.keywords and not RUN_SLOW:
            item.add_marker(skip_slow)
        if "extended" in item.keywords and not RUN_EXTENDED:
            item.add_marker(skip_extended)


@pytest.fixture(scope="session")
def three_bus():
    return load_bundled_case("three_bus")


@pytest.fixture(scope="session")
def garver6():
    return load_bundled_case("garver6")


@pytest.fixture(scope="session")
def two_bus():
    """One base line and one candidate between a generator and a load"""
    return parse_case_text(TWO_BUS, source="two_bus")


@pytest.fixture(scope="session")
def two_bus_text():
    return TWO_BUS
