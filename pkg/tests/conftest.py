import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from offline_plugin.hard_instances import reference_instance
from offline_plugin.mdp import Policy, random_mdp

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def seed7():
    """Unnormalized random S=3, A=2, H=4 instance used by the core DP tests."""
    return random_mdp(3, 2, 4, seed=7)


@pytest.fixture
def ref():
    """Bounded-total-reward seed-7 instance used by estimator and lemma tests."""
    return reference_instance()


@pytest.fixture
def uniform_policy():
    return lambda m: Policy.uniform(m.H, m.S, m.A)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
