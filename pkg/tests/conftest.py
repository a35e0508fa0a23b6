import numpy as np
import pytest

from dyadiclab import kernels
from dyadiclab.haar import build_haar
from dyadiclab.lattice import MetricSpace, build_christ_lattice, build_interval_lattice
from dyadiclab.measure import lebesgue, counting


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run the test once per available kernel backend."""
    prev = kernels.BACKEND
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(prev)


@pytest.fixture
def interval6():
    lat = build_interval_lattice(6)
    mu = lebesgue(lat)
    return lat, mu, build_haar(lat, mu)


@pytest.fixture
def christ_cloud():
    rng = np.random.default_rng(7)
    space = MetricSpace.from_points(rng.uniform(size=(120, 2)))
    lat = build_christ_lattice(space, delta=0.5, depth=4, seed=3)
    mu = counting(lat)
    return lat, mu, build_haar(lat, mu)
