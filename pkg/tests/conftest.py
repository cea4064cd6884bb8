import pytest

from hybridtsn.engine import Simulator


@pytest.fixture
def sim():
    return Simulator()
