"""YAML experiment files.

Schema (every section optional; unknown keys are rejected)::

    battery:    {e_max, e_min | e_c, mu, beta, perfect}
    arrival:    {kind: exponential, rate | mean} | {kind: empirical, samples}
    fading:     {kind: exponential, mean} | {kind: constant, gain}
                | {kind: empirical, samples}
    channel:    {n_symbols, noise_power}
    policy:     {kind: constant, p | theta | target_prob [, e_c]}
                | {kind: waterfilling, epsilon | theta | target_prob [, e_c]}
                | {kind: nostorage}
    simulation: {frames, burn_in, seed, outage_zero_rate, tail_grid, initial_energy}
    sweep:      {parameter, values}
    compare:    {e_c_values, policies: [policy, ...]}

Missing values fall back to the reference scenario in
:mod:`ehbattery.scenarios`.
"""
from __future__ import annotations

from dataclasses import dataclass

import yaml

from . import scenarios
from .battery import BatteryParams
from .channel import ChannelParams, Constant, NoStorage, WaterFilling
from .core import (
    ConstantFading,
    EmpiricalArrivals,
    EmpiricalFading,
    ExponentialArrivals,
    ExponentialFading,
)
from .errors import ConfigurationError
from .harness import PolicyConstraint, ScenarioConfig

TOP_LEVEL = {"battery", "arrival", "fading", "channel", "policy", "simulation", "sweep", "compare"}


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple


@dataclass(frozen=True)
class CompareSpec:
    policies: tuple
    e_c_values: tuple = scenarios.RATE_E_C_GRID


@dataclass(frozen=True)
class Experiment:
    scenario: ScenarioConfig
    sweep: SweepSpec | None = None
    compare: CompareSpec | None = None


def _section(data, name, allowed):
    sec = data.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigurationError(f"section {name!r} must be a mapping")
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {name!r}: {', '.join(sorted(unknown))}")
    return sec


def _check_keys(sec, name, allowed):
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {name!r}: {', '.join(sorted(unknown))}")


def parse_battery(sec):
    _check_keys(sec, "battery", {"e_max", "e_min", "e_c", "mu", "beta", "perfect"})
    e_max = float(sec.get("e_max", scenarios.E_MAX))
    if "e_min" in sec and "e_c" in sec:
        raise ConfigurationError("battery: give e_min or e_c, not both")
    if "e_c" in sec:
        e_min = e_max - float(sec["e_c"])
    else:
        e_min = float(sec.get("e_min", e_max - scenarios.REFERENCE_E_C))
    return BatteryParams(
        e_max=e_max,
        e_min=e_min,
        mu=float(sec.get("mu", scenarios.MU)),
        beta=float(sec.get("beta", scenarios.BETA)),
        perfect=bool(sec.get("perfect", False)),
    )


def parse_arrival(sec):
    kind = sec.get("kind", "exponential")
    if kind == "exponential":
        _check_keys(sec, "arrival", {"kind", "rate", "mean"})
        if "rate" in sec and "mean" in sec:
            raise ConfigurationError("arrival: give rate or mean, not both")
        rate = 1.0 / float(sec["mean"]) if "mean" in sec else float(sec.get("rate", scenarios.ARRIVAL_RATE))
        return ExponentialArrivals(rate)
    if kind == "empirical":
        _check_keys(sec, "arrival", {"kind", "samples"})
        return EmpiricalArrivals(tuple(sec.get("samples") or ()))
    raise ConfigurationError(f"unknown arrival kind {kind!r}")


def parse_fading(sec):
    kind = sec.get("kind", "exponential")
    if kind == "exponential":
        _check_keys(sec, "fading", {"kind", "mean"})
        return ExponentialFading(float(sec.get("mean", 1.0)))
    if kind == "constant":
        _check_keys(sec, "fading", {"kind", "gain"})
        if "gain" not in sec:
            raise ConfigurationError("constant fading needs a gain")
        return ConstantFading(float(sec["gain"]))
    if kind == "empirical":
        _check_keys(sec, "fading", {"kind", "samples"})
        return EmpiricalFading(tuple(sec.get("samples") or ()))
    raise ConfigurationError(f"unknown fading kind {kind!r}")


def parse_policy(sec, where="policy"):
    if not isinstance(sec, dict):
        raise ConfigurationError(f"{where} must be a mapping")
    kind = sec.get("kind", "constant")
    if kind == "nostorage":
        _check_keys(sec, where, {"kind"})
        return NoStorage()
    if kind not in ("constant", "waterfilling"):
        raise ConfigurationError(f"unknown policy kind {kind!r}")
    direct = "p" if kind == "constant" else "epsilon"
    _check_keys(sec, where, {"kind", direct, "theta", "target_prob", "e_c"})
    given = [k for k in (direct, "theta", "target_prob") if k in sec]
    if len(given) > 1:
        raise ConfigurationError(f"{where}: give only one of {direct}, theta, target_prob")
    if "e_c" in sec and "target_prob" not in sec:
        raise ConfigurationError(f"{where}: e_c only applies together with target_prob")
    if direct in sec:
        value = float(sec[direct])
        return Constant(value) if kind == "constant" else WaterFilling(value)
    if "target_prob" in sec:
        e_c = float(sec["e_c"]) if "e_c" in sec else None
        return PolicyConstraint(kind, target_prob=float(sec["target_prob"]), e_c=e_c)
    return PolicyConstraint(kind, theta=float(sec.get("theta", scenarios.THETAS[0])))


def parse_config(data) -> Experiment:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a mapping at top level")
    _check_keys(data, "config", TOP_LEVEL)
    sim = _section(data, "simulation", {"frames", "burn_in", "seed", "outage_zero_rate", "tail_grid", "initial_energy"})
    channel = _section(data, "channel", {"n_symbols", "noise_power"})
    try:
        burn_in = int(sim.get("burn_in", scenarios.BURN_IN))
        scenario = ScenarioConfig(
            battery=parse_battery(data.get("battery") or {}),
            arrival=parse_arrival(data.get("arrival") or {}),
            fading=parse_fading(data.get("fading") or {}),
            channel=ChannelParams(int(channel.get("n_symbols", 100)), float(channel.get("noise_power", 1.0))),
            policy=parse_policy(data.get("policy") or {}),
            frames=int(sim.get("frames", scenarios.FRAMES + burn_in)),
            burn_in=burn_in,
            seed=int(sim.get("seed", 1)),
            outage_zero_rate=bool(sim.get("outage_zero_rate", False)),
            tail_grid=tuple(sim["tail_grid"]) if sim.get("tail_grid") is not None else None,
            initial_energy=sim.get("initial_energy"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from None
    sweep = compare = None
    if "sweep" in data:
        sec = _section(data, "sweep", {"parameter", "values"})
        if "parameter" not in sec:
            raise ConfigurationError("sweep needs a parameter")
        sweep = SweepSpec(str(sec["parameter"]), tuple(sec.get("values") or ()))
    if "compare" in data:
        sec = _section(data, "compare", {"e_c_values", "policies"})
        policies = tuple(parse_policy(p, "compare.policies[]") for p in sec.get("policies") or ())
        if not policies:
            raise ConfigurationError("compare needs at least one policy")
        e_cs = tuple(float(x) for x in sec.get("e_c_values", scenarios.RATE_E_C_GRID))
        compare = CompareSpec(policies, e_cs)
    return Experiment(scenario, sweep, compare)


def load_config(path) -> Experiment:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid YAML in {path}: {exc}") from None
    return parse_config(data)
