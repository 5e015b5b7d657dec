import numpy as np
import pytest

from ssrscan import bundled_model, couple, assemble, transfer_magnitudes, eig_modes


@pytest.fixture(scope="session")
def two_area():
    return bundled_model()


@pytest.fixture(scope="session")
def coupling(two_area):
    return couple(two_area)


@pytest.fixture(scope="session")
def system(two_area, coupling):
    return assemble(two_area, coupling)


@pytest.fixture(scope="session")
def scan(system, two_area):
    return transfer_magnitudes(system, two_area.attack.bus)


@pytest.fixture(scope="session")
def modes(system):
    return eig_modes(system)


MINIMAL = """
[bus]
id = a
role = generator

[bus]
id = b
role = slack

[line]
from = a
to = b
x_pu = 0.5

[generator]
id = G
bus = a
dispatch_mw = 100
h = 0.9 0.25 0.9 0.9 0.25
k = 20 35 50 70
bf = 0.3 0.3 0.3 0.1

[load]
bus = b
mw = 100
"""


@pytest.fixture
def minimal_text():
    return MINIMAL
