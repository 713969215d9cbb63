import math

import numpy as np
import pytest

from hfvdd.mesh import build_cartesian, build_from_spec, build_triangular
from hfvdd.problem import diode_setup
from hfvdd.statistics import Blakemore, Boltzmann


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def tri0():
    return build_triangular(0, layout="diode")


@pytest.fixture(scope="session")
def hex76():
    return build_from_spec("hexagonal:diode")


@pytest.fixture(scope="session")
def cart2():
    return build_cartesian(2, 2, layout="diode")


@pytest.fixture(scope="session")
def tc4_setup(tri0):
    # Boltzmann, r = 0, b = 0, lambda = 1, N0 = e, N1 = 1, alpha0 = 1
    return diode_setup(tri0, Boltzmann(), math.e, 1.0, 1.0)


@pytest.fixture(scope="session")
def small_tc2_setup(cart2):
    # test-case 2 physics with a milder Debye length: lambda = 0.05 is not
    # resolved by a 2x2 mesh and the first step cannot be taken
    from hfvdd.problem import ScaledSRH
    return diode_setup(cart2, Blakemore(0.27), 3.5, 1.5, 0.0, b=1.0, debye=0.2,
                       recombination=ScaledSRH(10.0))
