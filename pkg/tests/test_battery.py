import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ehbattery.battery import (
    BatteryParams,
    BatteryState,
    available_space,
    available_space_step,
    initial_state,
    lossless_buffer,
    net_flow,
    simulate_states,
    step,
)
from ehbattery.errors import ConfigurationError

energy = st.floats(0, 500, allow_nan=False)
traces = st.lists(st.tuples(energy, energy), min_size=1, max_size=60)


def params(**kw):
    base = dict(e_max=100.0, e_min=20.0, mu=0.85, beta=0.80)
    base.update(kw)
    return BatteryParams(**base)


# --- step examples -------------------------------------------------------

def test_charging_clamps_at_capacity():
    s, o = step(BatteryState(90.0), 50.0, 10.0, params())
    assert s.energy == 100.0
    assert o.overflow_loss == pytest.approx(0.85 * 40 - 10)
    assert o.consumed == 10.0 and not o.outage


def test_discharge_covers_shortfall():
    s, o = step(BatteryState(50.0), 10.0, 30.0, params())
    assert s.energy == pytest.approx(50 - 20 / 0.8)
    assert o.consumed == 30.0
    assert not o.outage


def test_deep_discharge_is_an_outage():
    s, o = step(BatteryState(10.0), 0.0, 30.0, params())
    assert s.energy == 0.0
    assert o.outage and not o.demand_met
    assert o.consumed == pytest.approx(8.0)
    assert o.underflow


def test_underflow_tie_counts():
    # available space exactly e_c = 80
    s, o = step(BatteryState(100.0), 0.0, 16.0, params())
    assert s.energy == 80.0
    assert not o.underflow
    s, o = step(BatteryState(40.0), 0.0, 16.0, params())
    assert s.energy == 20.0
    assert o.underflow and not o.outage


@pytest.mark.parametrize("e, expected", [(100.0, 0.0), (0.0, 100.0), (67.0, 33.0)])
def test_available_space(e, expected):
    assert available_space(BatteryState(e), params()) == expected


def test_initial_state_defaults_to_full():
    assert initial_state(params()).energy == 100.0
    assert initial_state(params(), 5).energy == 5.0
    with pytest.raises(ConfigurationError):
        initial_state(params(), 101.0)


@pytest.mark.parametrize(
    "kw",
    [
        dict(e_min=100.0),
        dict(e_min=150.0),
        dict(e_max=-1.0),
        dict(mu=1.0),
        dict(beta=0.0),
        dict(mu=1.2, perfect=True),
    ],
)
def test_invalid_params(kw):
    with pytest.raises(ConfigurationError):
        params(**kw)


def test_perfect_mode_admits_unit_rates():
    p = params(mu=1.0, beta=1.0, perfect=True)
    assert net_flow(5.0, 2.0, p) == 3.0
    assert p.e_c == 80.0
    assert p.with_feasible_capacity(30.0).e_min == 70.0


# --- invariants ----------------------------------------------------------

def _rand_trace(rng, n):
    # rational arrivals/demands so both recursions are computed exactly
    return [(Fraction(rng.randint(0, 400), rng.randint(1, 8)), Fraction(rng.randint(0, 300), rng.randint(1, 8)))
            for _ in range(n)]


def test_duality_exact_on_random_traces():
    rng = random.Random(2024)
    prm = BatteryParams(e_max=Fraction(300), e_min=Fraction(50), mu=Fraction(17, 20), beta=Fraction(4, 5))
    for _ in range(10_000):
        state = BatteryState(Fraction(rng.randint(0, 300)))
        space = prm.e_max - state.energy
        for u, p in _rand_trace(rng, rng.randint(1, 20)):
            z = net_flow(u, p, prm)
            state, _ = step(state, u, p, prm)
            space = available_space_step(space, z, prm.e_max)
            assert space == prm.e_max - state.energy


@given(traces, st.floats(0, 100))
def test_clamping(trace, e0):
    prm = params()
    for e in simulate_states(e0, [u for u, _ in trace], [p for _, p in trace], prm):
        assert 0.0 <= e <= prm.e_max


@given(traces, st.integers(0, 100))
def test_perfect_battery_matches_lossless_buffer(trace, e0):
    # integer-valued inputs keep float arithmetic exact
    u = [float(round(a)) for a, _ in trace]
    p = [float(round(b)) for _, b in trace]
    prm = params(mu=1.0, beta=1.0, perfect=True)
    assert simulate_states(float(e0), u, p, prm) == lossless_buffer(float(e0), u, p, prm.e_max)


@given(energy, energy, st.floats(0, 100))
def test_energy_accounting(u, p, e0):
    prm = params()
    s, o = step(BatteryState(e0), u, p, prm)
    assert o.stored <= prm.mu * max(u - p, 0.0) + 1e-9
    assert o.drawn * prm.beta + min(u, p) >= o.consumed - 1e-9
    assert o.consumed <= p
    if o.overflow_loss > 0:
        assert not o.outage
    if o.outage:
        assert o.consumed < p
    clamped = o.outage or o.overflow_loss > 0
    if not clamped:
        if u >= p:
            assert o.stored == pytest.approx(prm.mu * (u - p), abs=1e-9)
        else:
            assert o.drawn * prm.beta + u == pytest.approx(o.consumed, abs=1e-9)


@given(energy, energy, st.floats(0, 100), st.floats(0, 100))
def test_step_is_order_preserving(u, p, ea, eb):
    ea, eb = max(ea, eb), min(ea, eb)
    prm = params()
    sa, _ = step(BatteryState(ea), u, p, prm)
    sb, _ = step(BatteryState(eb), u, p, prm)
    assert sa.energy >= sb.energy


@given(st.lists(st.floats(-500, 500), min_size=1, max_size=50), st.floats(0, 100))
def test_space_recursion_stays_in_range(zs, s0):
    s = s0
    for z in zs:
        s = available_space_step(s, z, 100.0)
        assert 0.0 <= s <= 100.0
