import math

import pytest
from hypothesis import HealthCheck, settings

from walker_sg.geometry import ConstellationSpec

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

KM = 1e3


@pytest.fixture
def fig3_spec():
    return ConstellationSpec(30, 50, math.radians(33), 6921 * KM, 6370 * KM)


@pytest.fixture
def small_spec():
    return ConstellationSpec(20, 20, math.radians(33), 6921 * KM, 6370 * KM)
