"""Block-fading channel: demand policies, consumed energy and service rate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import check_energy
from .errors import ConfigurationError, ContractViolation

LN2 = math.log(2.0)


@dataclass(frozen=True)
class ChannelParams:
    """Symbols per frame ``n_symbols`` and noise power per symbol.

    The defaults (100 symbols, unit noise) are assumptions: no particular
    values are implied by the model.
    """

    n_symbols: int = 100
    noise_power: float = 1.0

    def __post_init__(self):
        if int(self.n_symbols) != self.n_symbols or self.n_symbols < 1:
            raise ConfigurationError(f"n_symbols must be a positive integer, got {self.n_symbols!r}")
        if not (math.isfinite(self.noise_power) and self.noise_power > 0):
            raise ConfigurationError(f"noise_power must be > 0, got {self.noise_power!r}")

    @property
    def noise_energy(self):
        """Total noise energy per frame, ``N * sigma^2``."""
        return self.n_symbols * self.noise_power


@dataclass(frozen=True)
class Constant:
    """Demand the same energy ``p`` every frame."""

    p: float

    def __post_init__(self):
        check_energy(self.p, "constant demand p")

    kind = "constant"

    @property
    def parameter(self):
        return self.p


@dataclass(frozen=True)
class WaterFilling:
    """Demand ``N*sigma^2*[1/epsilon - 1/h]^+``; silent when ``h <= epsilon``."""

    epsilon: float

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ConfigurationError(f"water-filling cutoff must be > 0, got {self.epsilon!r}")

    kind = "waterfilling"

    @property
    def parameter(self):
        return self.epsilon


@dataclass(frozen=True)
class NoStorage:
    """Spend each frame's harvest immediately; the battery is bypassed."""

    kind = "nostorage"

    @property
    def parameter(self):
        return math.nan


DemandPolicy = Constant | WaterFilling | NoStorage


def demand(policy, h_pow, ch: ChannelParams):
    """Energy requested in a frame with power gain ``h_pow``."""
    if isinstance(policy, Constant):
        return policy.p
    if isinstance(policy, WaterFilling):
        return ch.noise_energy * max(1.0 / policy.epsilon - 1.0 / h_pow, 0.0)
    if isinstance(policy, NoStorage):
        raise ContractViolation("NoStorage has no demand; consumed energy equals the harvest")
    raise ConfigurationError(f"unknown policy {policy!r}")


def demand_array(policy, h_pow, ch: ChannelParams):
    """Vectorised :func:`demand`."""
    h_pow = np.asarray(h_pow, dtype=float)
    if isinstance(policy, Constant):
        return np.full(h_pow.shape, policy.p)
    if isinstance(policy, WaterFilling):
        return ch.noise_energy * np.maximum(1.0 / policy.epsilon - 1.0 / h_pow, 0.0)
    return demand(policy, 1.0, ch)


def consumed_energy(e_prev, u, p, beta):
    """Energy actually delivered to the transmitter.

    The full demand when the battery can cover the shortfall, otherwise the
    harvest plus everything the battery can deliver.
    """
    shortfall = max(p - u, 0.0)
    if e_prev >= shortfall / beta:
        return p
    return u + beta * e_prev


def service_rate(p_c, h_pow, ch: ChannelParams):
    """Bits per frame, ``N * log2(1 + p_c*h_pow/(N*sigma^2))``."""
    return ch.n_symbols * math.log1p(p_c * h_pow / ch.noise_energy) / LN2


def service_rate_array(p_c, h_pow, ch: ChannelParams):
    return ch.n_symbols * np.log1p(np.asarray(p_c) * np.asarray(h_pow) / ch.noise_energy) / LN2
