import math

import pytest

from dsii_lab import darboux as dx
from dsii_lab import model as md
from dsii_lab.spectral import TorusGrid

OMEGA = math.sqrt(2) / 2 + 0.11
K1, K2 = 1.0, math.sqrt(2)


@pytest.fixture(scope="session")
def params():
    return md.validate_params(OMEGA, 5.645, 11.336, 0.0, K1, K2)


@pytest.fixture(scope="session")
def dp():
    return dx.derive_params(OMEGA, K1, K2, delta_rho=1.1, gamma=math.pi / 2)


@pytest.fixture(scope="session")
def grid64():
    return TorusGrid(64, 64, K1, K2)


@pytest.fixture(scope="session")
def grid32():
    return TorusGrid(32, 32, K1, K2)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
