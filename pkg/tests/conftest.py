import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from repairseq.env import RecoveryEnv
from repairseq.fixtures import load_fixture

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def mimo():
    return load_fixture("mimo")


@pytest.fixture(scope="session")
def substation():
    return load_fixture("substation")


@pytest.fixture
def mimo_env(mimo):
    return RecoveryEnv(*mimo)


@pytest.fixture
def sub_env(substation):
    return RecoveryEnv(*substation)


def damaged_state(n, damaged):
    s = np.ones(n, dtype=np.int8)
    s[list(damaged)] = 0
    return s


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
