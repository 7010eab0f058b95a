"""Shared fixtures: session-scoped bases and grids to keep the suite fast."""

import numpy as np
import pytest

from polyflow.potential import make_fene, make_hookean
from polyflow.qbasis import build_basis
from polyflow.state import ModelParams
from polyflow.xgrid import TorusGrid


@pytest.fixture(scope="session")
def hook1():
    return make_hookean(1.0, 1.0, 1)


@pytest.fixture(scope="session")
def hook3():
    return make_hookean(1.0, 1.0, 3)


@pytest.fixture(scope="session")
def fene2():
    return make_fene(2.0, 1.0)


@pytest.fixture(scope="session")
def basis1(hook1):
    return build_basis(hook1, 8)


@pytest.fixture(scope="session")
def basis3(hook3):
    return build_basis(hook3, 8)


@pytest.fixture(scope="session")
def basis_fene(fene2):
    return build_basis(fene2, 8)


@pytest.fixture(scope="session")
def grid64():
    return TorusGrid((64,))


@pytest.fixture(scope="session")
def grid32():
    return TorusGrid((32,))


@pytest.fixture(scope="session")
def grid2d():
    return TorusGrid((16, 16))


@pytest.fixture()
def params():
    return ModelParams()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
