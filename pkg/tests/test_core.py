import math

import numpy as np
import pytest
from scipy import stats

from ehbattery.core import (
    ConstantFading,
    EmpiricalArrivals,
    EmpiricalFading,
    ExponentialArrivals,
    ExponentialFading,
    RngHandle,
    check_energy,
    sample_arrival,
    sample_fading,
)
from ehbattery.errors import ConfigurationError

from conftest import binomial_sigma

N = 10**6


def test_exponential_arrival_mean_is_100_units():
    u = ExponentialArrivals(0.01).sample(RngHandle(11), N)
    assert abs(u.mean() - 100.0) <= 0.5


def test_degenerate_empirical_arrival():
    rng = RngHandle(3)
    proc = EmpiricalArrivals((50,))
    assert {sample_arrival(proc, rng) for _ in range(100)} == {50.0}
    assert np.all(proc.sample(rng, 1000) == 50.0)


def test_exponential_arrival_tail_matches_closed_form():
    u = ExponentialArrivals(0.01).sample(RngHandle(12), N)
    p = math.exp(-3.0)
    assert abs(np.mean(u > 300) - p) <= 3 * binomial_sigma(p, N)


def test_constant_fading():
    rng = RngHandle(0)
    assert sample_fading(ConstantFading(2.0), rng) == 2.0
    assert np.all(ConstantFading(2.0).sample(rng, 10) == 2.0)


def test_unit_mean_exponential_fading():
    h = ExponentialFading().sample(RngHandle(13), N)
    assert abs(h.mean() - 1.0) <= 0.005
    assert np.all(h > 0)


def test_fading_cdf_matches_closed_form():
    h = ExponentialFading().sample(RngHandle(14), N)
    p = 1 - math.exp(-0.1)
    assert abs(np.mean(h < 0.1) - p) <= 3 * binomial_sigma(p, N)


def test_empirical_fading_draws_from_table():
    h = EmpiricalFading((0.5, 2.0)).sample(RngHandle(1), 10_000)
    assert set(np.unique(h)) == {0.5, 2.0}
    assert abs(np.mean(h == 0.5) - 0.5) < 0.03


def test_same_seed_and_stream_reproduce():
    a = ExponentialArrivals(0.01).sample(RngHandle(7, 3), 5000)
    b = ExponentialArrivals(0.01).sample(RngHandle(7, 3), 5000)
    assert np.array_equal(a, b)


def test_distinct_streams_differ_and_are_uncorrelated():
    a = ExponentialArrivals(0.01).sample(RngHandle(7, 0), 100_000)
    b = ExponentialArrivals(0.01).sample(RngHandle(7, 1), 100_000)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.02


def test_chunked_draws_match_single_draw():
    whole = ExponentialFading().sample(RngHandle(5), 3000)
    rng = RngHandle(5)
    parts = np.concatenate([ExponentialFading().sample(rng, n) for n in (1000, 1, 1999)])
    assert np.array_equal(whole, parts)


def test_ks_statistic_below_one_percent_critical_value():
    n = 10**5
    u = ExponentialArrivals(0.01).sample(RngHandle(21), n)
    res = stats.kstest(u, "expon", args=(0, 100.0))
    critical = stats.kstwo.ppf(0.99, n)
    assert res.statistic < critical


@pytest.mark.parametrize(
    "build",
    [
        lambda: ExponentialArrivals(0.0),
        lambda: ExponentialArrivals(-1.0),
        lambda: ExponentialArrivals(math.nan),
        lambda: EmpiricalArrivals(()),
        lambda: EmpiricalArrivals((1.0, -2.0)),
        lambda: ExponentialFading(0.0),
        lambda: ConstantFading(0.0),
        lambda: EmpiricalFading((1.0, 0.0)),
        lambda: RngHandle(-1),
        lambda: RngHandle(2**64),
        lambda: RngHandle(0, 1.5),
    ],
)
def test_invalid_parameters_raise(build):
    with pytest.raises(ConfigurationError):
        build()


def test_sampling_rejects_wrong_process_type():
    with pytest.raises(ConfigurationError):
        sample_arrival(ExponentialFading(), RngHandle(0))
    with pytest.raises(ConfigurationError):
        sample_fading(ExponentialArrivals(1.0), RngHandle(0))


def test_check_energy():
    assert check_energy(3) == 3.0
    for bad in (-1.0, math.inf, math.nan):
        with pytest.raises(ConfigurationError):
            check_energy(bad)
