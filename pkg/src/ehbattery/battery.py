"""Discrete-time lossy battery.

Per frame the battery is charged with ``mu * (u - p)`` when harvest exceeds
demand and discharged by ``(p - u) / beta`` otherwise, then clamped to
``[0, e_max]``.  These are reference (one-step, pure Python) implementations;
the trace kernels in :mod:`ehbattery.kernels` repeat the same arithmetic in
the same order for long runs.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import check_energy
from .errors import ConfigurationError


@dataclass(frozen=True)
class BatteryParams:
    """Capacity and loss rates of the storage element.

    ``perfect=True`` admits ``mu = beta = 1`` (lossless battery) and is meant
    for reduction tests; otherwise both rates must lie strictly in (0, 1).
    """

    e_max: float
    e_min: float = 0.0
    mu: float = 0.85
    beta: float = 0.80
    perfect: bool = False

    def __post_init__(self):
        check_energy(self.e_max, "e_max")
        check_energy(self.e_min, "e_min")
        if not self.e_min < self.e_max:
            raise ConfigurationError(f"need 0 <= e_min < e_max, got e_min={self.e_min}, e_max={self.e_max}")
        upper_ok = (lambda r: r <= 1) if self.perfect else (lambda r: r < 1)
        for name in ("mu", "beta"):
            r = getattr(self, name)
            if not (0 < r and upper_ok(r)):
                raise ConfigurationError(f"{name} must be in (0, 1), got {r!r}")

    @property
    def e_c(self):
        """Feasible capacity ``e_max - e_min``."""
        return self.e_max - self.e_min

    def with_feasible_capacity(self, e_c):
        """Same battery size with ``e_min`` moved so that ``e_c`` matches."""
        return replace(self, e_min=self.e_max - e_c)


@dataclass(frozen=True)
class BatteryState:
    energy: float
    frame_index: int = 0


@dataclass(frozen=True)
class StepOutcome:
    """What happened in one frame."""

    consumed: float
    overflow_loss: float
    stored: float
    drawn: float
    underflow: bool
    outage: bool
    demand_met: bool


def initial_state(params: BatteryParams, energy=None) -> BatteryState:
    """Full battery unless ``energy`` is given."""
    e = params.e_max if energy is None else check_energy(energy)
    if e > params.e_max:
        raise ConfigurationError(f"initial energy {e} exceeds e_max {params.e_max}")
    return BatteryState(e, 0)


def net_flow(u, p, params: BatteryParams):
    """Signed energy change before clamping: ``mu*(u-p)`` or ``(u-p)/beta``."""
    d = u - p
    if d >= 0:
        return params.mu * d
    return d / params.beta


def net_flow_array(u, p, mu, beta):
    """Vectorised :func:`net_flow` over arrays of arrivals and demands."""
    d = np.asarray(u, dtype=float) - np.asarray(p, dtype=float)
    return np.where(d >= 0, mu * d, d / beta)


def step(state: BatteryState, u, p, params: BatteryParams):
    """Advance the battery by one frame.

    Returns the new state and a :class:`StepOutcome`.  Works with any numeric
    type supporting ``+ - * /`` and ordering (floats or ``Fraction``).
    """
    e_prev = state.energy
    z = net_flow(u, p, params)
    level = e_prev + z
    if u >= p:
        consumed = p
        outage = False
        overflow = level - params.e_max if level > params.e_max else 0 * level
        energy = params.e_max if level > params.e_max else level
        stored = energy - e_prev
        drawn = 0 * level
    else:
        outage = level < 0
        if outage:
            drawn = e_prev
            consumed = u + params.beta * e_prev
            energy = 0 * level
        else:
            drawn = -z
            consumed = p
            energy = level
        overflow = 0 * level
        stored = 0 * level
    new_state = BatteryState(energy, state.frame_index + 1)
    outcome = StepOutcome(
        consumed=consumed,
        overflow_loss=overflow,
        stored=stored,
        drawn=drawn,
        underflow=available_space(new_state, params) >= params.e_c,
        outage=outage,
        demand_met=not outage,
    )
    return new_state, outcome


def available_space(state: BatteryState, params: BatteryParams):
    """Room left to store energy, ``e_max - E``."""
    return params.e_max - state.energy


def available_space_step(space_prev, z, e_max):
    """One step of the available-space recursion ``min([space - z]^+, e_max)``."""
    s = space_prev - z
    if s < 0:
        s = 0 * s
    return e_max if s > e_max else s


def simulate_states(energy0, arrivals, demands, params: BatteryParams):
    """Energy level after every frame for given arrival/demand sequences."""
    state = BatteryState(energy0, 0)
    out = []
    for u, p in zip(arrivals, demands):
        state, _ = step(state, u, p, params)
        out.append(state.energy)
    return out


def lossless_buffer(energy0, arrivals, demands, capacity):
    """Textbook finite buffer ``E = min(max(E + u - p, 0), capacity)``."""
    e = energy0
    out = []
    for u, p in zip(arrivals, demands):
        e = min(max(e + u - p, 0), capacity)
        out.append(e)
    return out
