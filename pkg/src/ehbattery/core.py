"""Shared distributions and deterministic random streams.

Energy is a plain non-negative ``float`` throughout; :func:`check_energy`
validates it at the boundaries.  Arrival and fading processes are frozen
dataclasses that know how to sample themselves from an :class:`RngHandle`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConfigurationError

UINT64_MAX = 2**64 - 1

# Stream ids reserved by the harness.  Arrivals and fading use separate
# streams so that every policy sees the same (u, h) sequence for a seed.
ARRIVAL_STREAM = 0
FADING_STREAM = 1
MONTE_CARLO_STREAM_BASE = 1 << 32


def check_energy(value, name="energy"):
    """Return ``value`` as a float, rejecting negative or non-finite input."""
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise ConfigurationError(f"{name} must be finite and >= 0, got {value!r}")
    return value


class RngHandle:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Uses the Philox generator, so distinct stream ids give independent,
    non-overlapping streams and the same pair always reproduces the same
    sequence.  A handle is mutable state owned by one worker.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        for name, v in (("seed", seed), ("stream_id", stream_id)):
            if int(v) != v or not 0 <= int(v) <= UINT64_MAX:
                raise ConfigurationError(f"{name} must be a 64-bit unsigned integer, got {v!r}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def __repr__(self):
        return f"RngHandle(seed={self.seed}, stream_id={self.stream_id})"


def _as_table(samples, name):
    table = np.asarray(samples, dtype=float)
    if table.ndim != 1 or table.size == 0:
        raise ConfigurationError(f"{name} needs a non-empty 1-D sample table")
    if not np.all(np.isfinite(table)):
        raise ConfigurationError(f"{name} sample table has non-finite entries")
    return table


@dataclass(frozen=True)
class ExponentialArrivals:
    """IID exponential energy arrivals with rate ``rate`` (mean ``1/rate``)."""

    rate: float

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ConfigurationError(f"arrival rate must be > 0, got {self.rate!r}")

    @property
    def mean(self):
        return 1.0 / self.rate

    def pdf(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u >= 0, self.rate * np.exp(-self.rate * np.maximum(u, 0.0)), 0.0)

    def sample(self, rng: RngHandle, size=None):
        return rng.generator.exponential(1.0 / self.rate, size)


@dataclass(frozen=True)
class EmpiricalArrivals:
    """IID arrivals drawn uniformly from a fixed sample table."""

    samples: tuple = field()

    def __post_init__(self):
        table = _as_table(self.samples, "EmpiricalArrivals")
        if np.any(table < 0):
            raise ConfigurationError("arrival samples must be >= 0")
        object.__setattr__(self, "samples", tuple(float(x) for x in table))

    @property
    def mean(self):
        return float(np.mean(self.samples))

    def sample(self, rng: RngHandle, size=None):
        table = np.asarray(self.samples)
        if table.size == 1:
            return table[0] if size is None else np.full(size, table[0])
        return rng.generator.choice(table, size)


@dataclass(frozen=True)
class ExponentialFading:
    """Rayleigh block fading: power gain exponential with the given mean."""

    mean: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.mean) and self.mean > 0):
            raise ConfigurationError(f"fading mean must be > 0, got {self.mean!r}")

    def pdf(self, h):
        h = np.asarray(h, dtype=float)
        return np.where(h >= 0, np.exp(-np.maximum(h, 0.0) / self.mean) / self.mean, 0.0)

    def sample(self, rng: RngHandle, size=None):
        out = rng.generator.exponential(self.mean, size)
        # exponential() can return exactly 0.0; power gains must stay positive
        if size is None:
            return out if out > 0 else np.nextafter(0.0, 1.0)
        out[out <= 0] = np.nextafter(0.0, 1.0)
        return out


@dataclass(frozen=True)
class ConstantFading:
    """Deterministic channel with power gain ``gain`` every frame."""

    gain: float

    def __post_init__(self):
        if not (math.isfinite(self.gain) and self.gain > 0):
            raise ConfigurationError(f"constant gain must be > 0, got {self.gain!r}")

    @property
    def mean(self):
        return self.gain

    def sample(self, rng: RngHandle, size=None):
        return self.gain if size is None else np.full(size, self.gain)


@dataclass(frozen=True)
class EmpiricalFading:
    """IID power gains drawn uniformly from a fixed table of positive values."""

    samples: tuple = field()

    def __post_init__(self):
        table = _as_table(self.samples, "EmpiricalFading")
        if np.any(table <= 0):
            raise ConfigurationError("fading samples must be > 0")
        object.__setattr__(self, "samples", tuple(float(x) for x in table))

    @property
    def mean(self):
        return float(np.mean(self.samples))

    def sample(self, rng: RngHandle, size=None):
        table = np.asarray(self.samples)
        if table.size == 1:
            return table[0] if size is None else np.full(size, table[0])
        return rng.generator.choice(table, size)


ArrivalProcess = Union[ExponentialArrivals, EmpiricalArrivals]
FadingProcess = Union[ExponentialFading, ConstantFading, EmpiricalFading]


def sample_arrival(process: ArrivalProcess, rng: RngHandle) -> float:
    """Draw one frame's harvested energy u(i)."""
    if not isinstance(process, (ExponentialArrivals, EmpiricalArrivals)):
        raise ConfigurationError(f"unsupported arrival process {process!r}")
    return float(process.sample(rng))


def sample_fading(process: FadingProcess, rng: RngHandle) -> float:
    """Draw one frame's channel power gain h_pow(i)."""
    if not isinstance(process, (ExponentialFading, ConstantFading, EmpiricalFading)):
        raise ConfigurationError(f"unsupported fading process {process!r}")
    return float(process.sample(rng))
