import pytest
from hypothesis import HealthCheck, settings

from chanfsi.config import ModelConfig, PressureSpec
from chanfsi.coupling import CoupledModel

settings.register_profile("chanfsi", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("chanfsi")

# filled by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def default_config():
    return ModelConfig()


@pytest.fixture(scope="session")
def small_config():
    """Coarse grid, short horizon: fast coupled runs."""
    return ModelConfig(N1=16, N2=8, T=0.05, dt=0.005)


@pytest.fixture(scope="session")
def zero_config():
    return ModelConfig(N1=16, N2=8, T=0.05, dt=0.005, q_w=PressureSpec())


@pytest.fixture(scope="session")
def small_model(small_config):
    return CoupledModel(small_config)


@pytest.fixture(scope="session")
def small_traj(small_model):
    return small_model.evaluate(small_model.zero_wall())
