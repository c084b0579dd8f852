import numpy as np
import pytest

from hgan_tsa.grid import ScenarioGrid, build_system, bundled_case, generate_dataset
from hgan_tsa.hgan import HganConfig, train_hgan


@pytest.fixture(scope="session")
def smib_case():
    return bundled_case("smib")


@pytest.fixture(scope="session")
def smib_system(smib_case):
    return build_system(smib_case, 1.0)


@pytest.fixture(scope="session")
def wscc_system():
    return build_system(bundled_case("wscc9"), 1.0)


@pytest.fixture(scope="session")
def smib_dataset(smib_case):
    """20 balanced samples, 16 train / 4 test, one PMU per bus."""
    grid = ScenarioGrid.from_case(smib_case, pmu_buses=[1, 2])
    return generate_dataset(grid)


@pytest.fixture(scope="session")
def tiny_config():
    return HganConfig(n_levels=2, episodes=30, lr_g=0.2, lr_d=0.02, batch_size=8,
                      hidden_size=4, trunk_size=4, log_every=10)


@pytest.fixture(scope="session")
def tiny_model(smib_dataset, tiny_config):
    return train_hgan(smib_dataset, tiny_config, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
