import os

import pytest
from hypothesis import HealthCheck, settings

from hybridsim.scenario import scenario_from_dict

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def small_scenario(**overrides):
    """One local node, one cloud node behind a WAN link, no traffic."""
    d = {
        "name": "unit",
        "horizonSec": 20.0,
        "topology": {
            "nodes": [{"id": "local-0", "segment": "local", "serviceRatePerCapacity": 10.0},
                      {"id": "cloud-0", "segment": "cloud", "serviceRatePerCapacity": 10.0}],
            "links": [{"id": "wan", "endpoints": ["source", "cloud-0"], "bandwidth": 100.0,
                       "propagationDelaySec": 0.0, "qosShares": {"interactive": 0.3, "data": 0.5}}],
            "dispatcher": {"localNodes": ["local-0"], "cloudNodes": ["cloud-0"], "cloudLink": "wan"},
        },
        "duplication": {"dupTimeoutSec": 1.0, "maxDupDepth": 0},
    }
    for key, val in overrides.items():
        d[key] = val
    return scenario_from_dict(d)


@pytest.fixture
def small():
    return small_scenario
