import pytest
from hypothesis import settings

from onebit.expectation import ExpectationEngine

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def engine():
    return ExpectationEngine("quadrature", nodes=128)


@pytest.fixture(scope="session")
def fine_engine():
    return ExpectationEngine("quadrature", nodes=256)
