import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from services.sample_data import FiniteMetricGenerator  # noqa: E402
from services.spaces import Circle, FlatTorus, RevolutionTorus, Sphere  # noqa: E402

FIXTURES = Path(__file__).resolve().parent / 'fixtures'

# u = exp(-lambda pi^2 / 4) at lambda = 0.1; lambda_min of the N = 4 circle Gram matrix
U_01 = math.exp(-0.1 * math.pi ** 2 / 4.0)
MU2_01 = (1.0 - U_01) * (1.0 - U_01 - U_01 ** 2 - U_01 ** 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_circle():
    return Circle(1.0)


@pytest.fixture
def sphere2():
    return Sphere(2)


@pytest.fixture
def unit_torus():
    return FlatTorus(np.eye(2))


@pytest.fixture
def tall_torus():
    return FlatTorus(np.diag([1.0, 5.0]))


@pytest.fixture
def ring_torus():
    return RevolutionTorus(3.0, 1.0)


@pytest.fixture
def generator():
    return FiniteMetricGenerator(seed=7)


@pytest.fixture
def stein_fixture():
    with open(FIXTURES / 'spd_stein_witness.json', encoding='utf-8') as handle:
        return json.load(handle)
