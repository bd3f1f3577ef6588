import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hheml.he.evaluator import Evaluator
from hheml.hhe import Transcipherer, hhe_keygen, make_profile

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def profile():
    return make_profile("test", "test-8192")


@pytest.fixture(scope="session")
def bundle(profile):
    return hhe_keygen(profile, seed=1234)


@pytest.fixture(scope="session")
def he(profile):
    return profile.he


@pytest.fixture(scope="session")
def keys(bundle):
    return bundle.he_keys


@pytest.fixture()
def ev(profile):
    return Evaluator(profile.he)


@pytest.fixture(scope="session")
def server(profile, bundle):
    return Transcipherer(profile, bundle.evk)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240611)
