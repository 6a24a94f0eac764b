import math
from dataclasses import replace

import numpy as np
import pytest

from ehbattery import scenarios
from ehbattery.analysis import refined_underflow_approx
from ehbattery.battery import BatteryParams
from ehbattery.channel import Constant, NoStorage, WaterFilling
from ehbattery.errors import ConfigurationError, InstabilityError, LargeDeviationWarning
from ehbattery.harness import (
    PolicyConstraint,
    ScenarioConfig,
    compare_policies,
    resolve_policy,
    run_replications,
    run_sweep,
    run_trace,
    with_parameter,
)
from ehbattery.kernels import compiled_advance

THETA = scenarios.THETAS[0]


def small(policy=None, e_c=2000.0, frames=400_000, **kw):
    return scenarios.reference_scenario(policy, e_c=e_c, frames=frames, burn_in=20_000, **kw)


@pytest.fixture(scope="module")
def trace():
    return run_trace(small())


def test_frequencies_and_counts(trace):
    assert trace.frames_counted == 400_000
    for f in (trace.underflow_freq, trace.outage_freq, trace.delta_hat, trace.nonfull_freq, trace.demand_met_freq):
        assert 0.0 <= f <= 1.0
    assert trace.delta_hat + trace.nonfull_freq == 1.0
    assert trace.outage_freq + trace.demand_met_freq == pytest.approx(1.0)
    assert trace.theta == THETA
    assert trace.underflow_events <= trace.underflow_freq * trace.frames_counted


def test_energy_audit(trace):
    assert trace.audit.relative_residual <= 1e-9


def test_audit_lossless_with_burn_in_zero():
    cfg = ScenarioConfig(BatteryParams(500.0, 0.0, 1.0, 1.0, perfect=True), policy=Constant(80.0),
                         frames=50_000, burn_in=0, seed=3)
    st = run_trace(cfg)
    assert st.audit.charge_loss == 0.0 and st.audit.discharge_loss == 0.0
    assert st.audit.relative_residual <= 1e-9


def test_zero_demand_fills_battery():
    st = run_trace(small(Constant(0.0), frames=100_000))
    assert st.underflow_freq == 0.0
    assert st.delta_hat == 1.0
    assert st.theta == math.inf


def test_nostorage_trace():
    st = run_trace(small(NoStorage(), frames=100_000))
    assert st.outage_freq == 0.0
    assert st.mean_consumed == pytest.approx(100.0, rel=0.01)
    assert math.isnan(st.theta)


def test_determinism(trace):
    assert run_trace(small()) == trace


def test_replications_independent_of_worker_count():
    cfg = small(frames=100_000)
    a = run_replications(cfg, 3, workers=1)
    b = run_replications(cfg, 3, workers=2)
    assert a == b
    assert a[0] != a[1]


@pytest.mark.skipif(compiled_advance is None, reason="compiled kernel not built")
def test_python_backend_gives_identical_stats():
    cfg = small(frames=60_000)
    assert run_trace(cfg, backend="python") == run_trace(cfg, backend="cython")


def test_second_seed_agrees(trace):
    other = run_trace(small(seed=2))
    se = math.hypot(trace.underflow_stderr, other.underflow_stderr)
    assert trace.underflow_events >= 50
    assert abs(trace.underflow_freq - other.underflow_freq) <= 3 * se


def test_refined_approximation_small_capacity():
    # battery no larger than its feasible capacity, so the full state carries real mass
    cfg = ScenarioConfig(BatteryParams(2000.0, 0.0), policy=PolicyConstraint("constant", theta=THETA),
                         frames=10_100_000, burn_in=100_000, seed=1, tail_grid=())
    st = run_trace(cfg)
    with pytest.warns(LargeDeviationWarning):
        refined = refined_underflow_approx(THETA, 2000.0, st.delta_hat)
    assert st.underflow_events >= 100
    assert refined / 2 <= st.underflow_freq <= 2 * refined


def test_unstable_policy_refused():
    with pytest.raises(InstabilityError) as info:
        run_trace(small(Constant(90.0), frames=1000))
    assert info.value.mean_net_flow < 0


def test_solved_policies_are_stable():
    for kind in ("constant", "waterfilling"):
        res = resolve_policy(small(PolicyConstraint(kind, target_prob=1e-4, e_c=1e4)))
        assert res.mean_net_flow > 0 and res.solution.stable
        assert res.theta == pytest.approx(scenarios.THETAS[1], rel=1e-12)


def test_target_prob_uses_battery_capacity():
    res = resolve_policy(small(PolicyConstraint("constant", target_prob=1e-2), e_c=5000.0))
    assert res.theta == pytest.approx(-math.log(1e-2) / 5000.0)
    res = resolve_policy(small(PolicyConstraint("constant", target_prob=1e-2, e_c=1e4), e_c=5000.0))
    assert res.theta == pytest.approx(THETA)


def test_paired_monotonicity_in_theta():
    rates = []
    for theta in scenarios.THETAS:
        cfg = small(PolicyConstraint("constant", theta=theta), e_c=1000.0, frames=200_000, tail_grid=())
        rates.append(run_trace(cfg).mean_service_rate)
    assert rates[0] >= rates[1] >= rates[2]


def test_config_validation():
    b = BatteryParams(100.0)
    for kw in (dict(frames=10, burn_in=10), dict(seed=-1), dict(policy="constant"),
               dict(tail_grid=(3.0, 2.0)), dict(initial_energy=200.0), dict(frames=10.5)):
        with pytest.raises(ConfigurationError):
            ScenarioConfig(b, **kw)
    with pytest.raises(ConfigurationError):
        PolicyConstraint("constant")
    with pytest.raises(ConfigurationError):
        PolicyConstraint("nostorage", theta=1e-4)


def test_with_parameter():
    cfg = small()
    assert with_parameter(cfg, "battery.e_c", 3000).battery.e_min == 12_000.0
    assert with_parameter(cfg, "seed", 9).seed == 9
    assert with_parameter(cfg, "policy.target_prob", 1e-3).policy.theta is None
    assert with_parameter(small(Constant(5.0)), "policy.p", 7.0).policy == Constant(7.0)
    for path in ("battery.colour", "nothing.e_c", "a.b.c"):
        with pytest.raises(ConfigurationError):
            with_parameter(cfg, path, 1)


def test_sweep_rows_and_error_rows():
    base = small(frames=100_000)
    with pytest.warns(LargeDeviationWarning):
        rows = run_sweep(base, "battery.e_c", [1000.0, 20_000.0, 3000.0])
    assert [r.error is None for r in rows] == [True, False, True]
    ok = rows[0]
    assert ok.e_c == 1000.0 and ok.approx_exp == pytest.approx(math.exp(-THETA * 1000))
    assert ok.approx_refined == pytest.approx(ok.delta_hat * ok.approx_exp)
    assert rows[1].low_confidence and math.isnan(rows[1].empirical_underflow)


def test_sweep_over_unstable_policy_reports_error():
    rows = run_sweep(small(Constant(10.0), frames=10_000), "policy.p", [10.0, 95.0])
    assert rows[0].error is None
    assert "InstabilityError" in rows[1].error


def test_compare_policies_shape():
    cfg = small(frames=50_000)
    pols = [NoStorage(), PolicyConstraint("constant", theta=THETA), PolicyConstraint("waterfilling", theta=THETA)]
    rows = compare_policies(cfg, pols, [200.0, 5000.0])
    assert [(r.policy, r.e_c) for r in rows] == [
        ("nostorage", 200.0), ("constant", 200.0), ("waterfilling", 200.0),
        ("nostorage", 5000.0), ("constant", 5000.0), ("waterfilling", 5000.0),
    ]
    assert rows[0].mean_service_rate == rows[3].mean_service_rate
    assert all(r.mean_service_rate > 0 for r in rows)
