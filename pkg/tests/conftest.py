import numpy as np
import pytest

from kmcauchy.fem import assemble
from kmcauchy.mesh import build_parabola_domain, build_unit_square


@pytest.fixture(scope="session")
def square():
    return assemble(build_unit_square(0.1))


@pytest.fixture(scope="session")
def square_coarse():
    return assemble(build_unit_square(0.5))


@pytest.fixture(scope="session")
def parabola():
    return assemble(build_parabola_domain(0.5, 0.05))


@pytest.fixture(scope="session")
def parabola_coarse():
    return assemble(build_parabola_domain(0.5, 0.1))


@pytest.fixture(params=["square", "parabola_coarse"])
def system(request):
    return request.getfixturevalue(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
