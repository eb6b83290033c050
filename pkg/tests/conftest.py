from __future__ import annotations

import pytest

from foggyedge.config import ScenarioConfig
from foggyedge.engine import Kinematics
from foggyedge.network import Network

# filled by tests/test_acceptance.py, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


def quiet_config(**kw) -> ScenarioConfig:
    """Defaults with no parked vehicles churning in the background."""
    base = dict(fog_initial_vehicles=0, fog_arrival_rate=0.0)
    base.update(kw)
    return ScenarioConfig(**base)


def park_consumer(net: Network, consumer_index: int, edge_index: int, speed: float = 0.0,
                  offset: float = 0.0):
    con = net.consumers[consumer_index]
    con.kin = Kinematics(net.edges[edge_index].position(0) + offset, speed, net.direction, net.now)
    return con


@pytest.fixture
def quiet():
    return quiet_config
