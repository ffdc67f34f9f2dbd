import numpy as np
import pytest

from steering_core.model import ModelSpec


def pytest_addoption(parser):
    parser.addoption("--run-acceptance", action="store_true", default=False,
                     help="Run the long reproduction checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-acceptance"):
        return
    skip = pytest.mark.skip(reason="needs --run-acceptance")
    for item in items:
        if "acceptance" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def one_qubit():
    return ModelSpec()


@pytest.fixture
def two_qubits():
    return ModelSpec(n_qubits=2, coupling=0.49)


@pytest.fixture
def random_density(rng):
    def make(dim: int) -> np.ndarray:
        m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        rho = m @ m.conj().T
        return rho / np.trace(rho).real

    return make
