import numpy as np
import pytest

from invcomm import scenario
from invcomm.actions import ActionGrid, enumerate_actions
from invcomm.scenario import CostParams, build_two_regime_scenario

# lines printed by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tiny():
    return scenario.tiny_case()


@pytest.fixture(scope="session")
def base():
    return scenario.base_case()


def informative_case(comm: float = 0.3) -> scenario.ScenarioConfig:
    """Single retailer, S_max=5, demand means 1/4: targets and sharing both matter."""
    return build_two_regime_scenario(0.9, 1.0, 4.0, CostParams(1.0, 5.0, comm, 0.9), 1, 5)


def full_grid_actions(config, comm_options=(0, 1)):
    levels = tuple(range(config.s_max + 1))
    grid = ActionGrid((levels,) * config.n_regimes)
    return enumerate_actions(grid, config.n_retailers, config.n_regimes, comm_options)


@pytest.fixture(scope="session")
def informative():
    return informative_case()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
