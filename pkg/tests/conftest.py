import math

import pytest
from hypothesis import settings

from ehbattery import scenarios
from ehbattery.battery import BatteryParams
from ehbattery.channel import ChannelParams
from ehbattery.core import ExponentialArrivals, ExponentialFading

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")

LAM, MU, BETA = scenarios.ARRIVAL_RATE, scenarios.MU, scenarios.BETA
THETAS = scenarios.THETAS


@pytest.fixture
def battery():
    return BatteryParams(e_max=100.0, e_min=20.0, mu=MU, beta=BETA)


@pytest.fixture
def arrivals():
    return ExponentialArrivals(LAM)


@pytest.fixture
def fading():
    return ExponentialFading(1.0)


@pytest.fixture
def channel():
    return ChannelParams(100, 1.0)


def binomial_sigma(p, n):
    return math.sqrt(p * (1 - p) / n)
