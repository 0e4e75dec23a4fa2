import math

import numpy as np
import pytest

from signedchord.geometry import Body, box, shell, sphere
from signedchord.sampling import StreamPlan

SHELL_V = 7 * math.pi / 6
SHELL_S = 5 * math.pi


@pytest.fixture(scope="session")
def unit_sphere():
    return Body.from_solid(sphere(1.0), name="sphere")


@pytest.fixture(scope="session")
def unit_shell():
    return Body.from_solid(shell(1.0, 0.5), name="shell")


@pytest.fixture(scope="session")
def unit_box():
    return Body.from_solid(box(), name="box")


@pytest.fixture
def plan():
    return StreamPlan(seed=12345, streams=8)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def sphere_gamma(l):
    """Normalised autocorrelation of the unit ball (overlap volume of two unit balls)."""
    l = np.asarray(l, float)
    return np.where(l < 2, 1 - 0.75 * l + l ** 3 / 16, 0.0)
