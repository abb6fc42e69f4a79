import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bmera.network import MeraConfig, random_isometric

settings.register_profile(
    "bmera",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("bmera")


@pytest.fixture(scope="session")
def t42():
    return random_isometric(MeraConfig(d=2, m=2, seed=42))


@pytest.fixture(scope="session")
def t7():
    return random_isometric(MeraConfig(d=2, m=2, seed=7))


@pytest.fixture(scope="session")
def ctx42(t42):
    from bmera.observables import Context

    return Context(t42)


@pytest.fixture(scope="session")
def state42(t42):
    from bmera.oracle import build_state

    return build_state(t42, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_hermitian(rng, dim):
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (g + g.conj().T)


def random_density(rng, dim):
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    from test_acceptance import ACCEPTANCE_KEY

    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
