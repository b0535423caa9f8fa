import pytest

from bubbleflow import profiles


@pytest.fixture(scope="session")
def phi1():
    return profiles.solve_phi1()


@pytest.fixture(scope="session")
def eigenpair():
    return profiles.eigen_negative()
