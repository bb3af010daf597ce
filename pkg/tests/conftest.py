import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dtvec.scenario import (
    EdgeSpec,
    EntityAssociation,
    InfoSpec,
    Scenario,
    SensingCapability,
    VehicleSpec,
)

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile(
    "thorough", max_examples=500, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def stationary(x, y, duration=100.0):
    return np.array([[0.0, x, y], [duration, x, y]])


def small_scenario(
    positions=((100.0, 0.0), (0.0, 200.0)),
    caps=(((0, 0.5, 2.0, 0.2), (1, 0.5, 2.0, 0.3)), ((1, 0.5, 2.0, 0.1), (2, 0.5, 2.0, 0.4))),
    infos=((0, 0, 1.0, 2e5), (1, 1, 2.0, 3e5), (2, 2, 3.0, 1e5)),
    entities=((0, (0, 1)), (1, (1, 2))),
    slots=5,
    edge_range=500.0,
    bandwidth=2e6,
    power_cap=0.1,
    trajectories=None,
):
    """Stationary vehicles around an edge at the origin; every knob overridable."""
    info_specs = tuple(InfoSpec(*i) for i in infos)
    vehicles = []
    for j, (pos, cl) in enumerate(zip(positions, caps)):
        traj = trajectories[j] if trajectories is not None else stationary(*pos)
        vehicles.append(VehicleSpec(j, traj, tuple(SensingCapability(*c) for c in cl), power_cap))
    ents = tuple(EntityAssociation(e, frozenset(r)) for e, r in entities)
    return Scenario(slots, 1.0, info_specs, tuple(vehicles), EdgeSpec((0.0, 0.0), edge_range, bandwidth), ents)


@pytest.fixture
def tiny_scenario():
    return small_scenario()


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda x: int(x.split()[2].rstrip(':'))):
            terminalreporter.write_line(line)
