import numpy as np
import pytest

from vanhove.models import random_admissible_model, reference_qubit_model


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_qubit_model():
    """Reference qubit model shrunk to 16 modes: composite dimension 34."""
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return reference_qubit_model(16)


@pytest.fixture
def random_models(rng):
    return [random_admissible_model(rng) for _ in range(5)]


def random_density(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)
