import numpy as np
import pytest

from samro.sim import ScenarioConfig, UserGroupSpec


def small_scenario(**kw):
    """Nine-cell layout with a dozen fast users and short agent steps."""
    base = dict(
        user_groups=[UserGroupSpec(6, 0, 5.0, 60.0, None, "a"),
                     UserGroupSpec(6, 1, 3.0, 60.0, None, "b")],
        ticks_per_agent_step=100,
        rng_seed=7,
    )
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.fixture
def scenario():
    return small_scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
