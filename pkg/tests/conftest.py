import math

import numpy as np
import pytest

from shearboltz.kernels import CollisionKernel, kernel_moments
from shearboltz.moment_dynamics import build_operator

ALPHA = 4 * math.pi / 5
BETA = 4 * math.pi / 3
C1 = 32 * math.pi / 15
C2 = 4 * math.pi / 15
K0 = C1 * math.sqrt(2.5)


@pytest.fixture(scope="session")
def constant_kernel() -> CollisionKernel:
    return CollisionKernel.preset("constant")


@pytest.fixture(scope="session")
def moments(constant_kernel):
    return kernel_moments(constant_kernel)


@pytest.fixture
def op_k1(moments):
    return build_operator(moments, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
