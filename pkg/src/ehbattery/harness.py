"""Monte Carlo experiment engine.

A single trace is inherently sequential (each frame depends on the previous
battery level), so parallelism is only used across independent traces:
sweep points, policy comparisons and replications.  Every trace draws its
arrivals and channel gains from streams keyed by ``(seed, replicate)`` only,
which pairs all policies and sweep points on common random numbers.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import kernels
from .analysis import (
    MIN_TAIL_EVENTS,
    BalanceSolution,
    TailCounts,
    TailEstimate,
    default_threshold_grid,
    estimate_decay_rate,
    mean_net_flow,
    refined_underflow_approx,
    solve_constant_demand_for,
    solve_decay_rate,
    solve_waterfilling_cutoff,
    theta_from_constraint,
    underflow_prob_approx,
)
from .battery import BatteryParams
from .channel import ChannelParams, Constant, NoStorage, WaterFilling
from .core import (
    ARRIVAL_STREAM,
    FADING_STREAM,
    UINT64_MAX,
    ExponentialArrivals,
    ExponentialFading,
    RngHandle,
)
from .errors import (
    ConfigurationError,
    EstimationError,
    InstabilityError,
    LargeDeviationWarning,
    ModelError,
)

BATCH = 1 << 16
LOW_CONFIDENCE_EVENTS = MIN_TAIL_EVENTS


@dataclass(frozen=True)
class PolicyConstraint:
    """A demand policy given by its decay rate rather than its parameter.

    Exactly one of ``theta`` or ``target_prob`` is set.  With
    ``target_prob`` the decay rate is ``-log(target_prob)/e_c``, where
    ``e_c`` defaults to the scenario battery's feasible capacity.
    """

    kind: str
    theta: float | None = None
    target_prob: float | None = None
    e_c: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "waterfilling"):
            raise ConfigurationError(f"constraint policy kind must be constant or waterfilling, got {self.kind!r}")
        if (self.theta is None) == (self.target_prob is None):
            raise ConfigurationError("give exactly one of theta or target_prob")
        if self.theta is not None and not self.theta > 0:
            raise ConfigurationError(f"theta must be > 0, got {self.theta!r}")

    def decay_rate(self, default_e_c):
        if self.theta is not None:
            return float(self.theta)
        e_c = default_e_c if self.e_c is None else self.e_c
        return theta_from_constraint(self.target_prob, e_c).theta


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to run one trace.

    ``frames`` includes the ``burn_in`` frames discarded before statistics
    are collected.  ``replicate`` selects an independent pair of random
    streams for the same seed.
    """

    battery: BatteryParams
    arrival: object = ExponentialArrivals(0.01)
    fading: object = ExponentialFading()
    channel: ChannelParams = ChannelParams()
    policy: object = NoStorage()
    frames: int = 10_100_000
    burn_in: int = 100_000
    seed: int = 0
    outage_zero_rate: bool = False
    tail_grid: tuple | None = None
    initial_energy: float | None = None
    replicate: int = 0

    def __post_init__(self):
        if int(self.frames) != self.frames or int(self.burn_in) != self.burn_in:
            raise ConfigurationError("frames and burn_in must be integers")
        if self.burn_in < 0 or self.frames <= self.burn_in:
            raise ConfigurationError(f"need frames > burn_in >= 0, got {self.frames}, {self.burn_in}")
        if not 0 <= self.seed <= UINT64_MAX:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if not isinstance(self.policy, (Constant, WaterFilling, NoStorage, PolicyConstraint)):
            raise ConfigurationError(f"unsupported policy {self.policy!r}")
        if self.tail_grid is not None:
            grid = tuple(float(t) for t in self.tail_grid)
            if any(b <= a for a, b in zip(grid, grid[1:])) or any(t < 0 for t in grid):
                raise ConfigurationError("tail_grid must be non-negative and strictly increasing")
            object.__setattr__(self, "tail_grid", grid)
        if self.initial_energy is not None and not 0 <= self.initial_energy <= self.battery.e_max:
            raise ConfigurationError("initial_energy must lie in [0, e_max]")

    @property
    def frames_counted(self):
        return self.frames - self.burn_in


@dataclass(frozen=True)
class ResolvedPolicy:
    policy: object
    theta: float
    solution: BalanceSolution | None = None
    mean_net_flow: float = math.nan


@dataclass(frozen=True)
class EnergyAudit:
    """Energy bookkeeping over the collected frames."""

    harvested: float
    consumed: float
    overflow: float
    charge_loss: float
    discharge_loss: float
    energy_start: float
    energy_end: float

    @property
    def residual(self):
        """Harvest minus every sink; zero up to round-off."""
        return self.harvested - (
            self.consumed + self.overflow + self.charge_loss + self.discharge_loss + self.energy_end - self.energy_start
        )

    @property
    def relative_residual(self):
        return abs(self.residual) / max(self.harvested, 1e-300)


@dataclass(frozen=True)
class TraceStats:
    """Steady-state statistics of one trace.

    ``underflow_events`` counts distinct entries into underflow; frames in
    underflow are strongly correlated, so confidence is judged on events and
    ``underflow_stderr`` uses batch means rather than a per-frame binomial.
    """

    policy: object
    theta: float
    e_c: float
    underflow_freq: float
    underflow_events: int
    underflow_stderr: float
    low_confidence: bool
    outage_freq: float
    delta_hat: float
    nonfull_freq: float
    overflow_loss_rate: float
    mean_service_rate: float
    mean_consumed: float
    demand_met_freq: float
    tail_counts: TailCounts
    tail: TailEstimate | None
    frames_counted: int
    audit: EnergyAudit
    backend: str = field(default="", compare=False)


def _mean_flow(policy, config):
    b = config.battery
    return mean_net_flow(policy, config.arrival, config.fading, config.channel, b.mu, b.beta)


def resolve_policy(config: ScenarioConfig) -> ResolvedPolicy:
    """Turn the configured policy into a concrete one and check stability.

    Raises :class:`InstabilityError` when the mean net flow is not positive.
    """
    policy = config.policy
    b = config.battery
    if isinstance(policy, NoStorage):
        return ResolvedPolicy(policy, math.nan)
    if isinstance(policy, PolicyConstraint):
        theta = policy.decay_rate(b.e_c)
        if policy.kind == "constant":
            sol = solve_constant_demand_for(theta, config.arrival, b.mu, b.beta)
        else:
            sol = solve_waterfilling_cutoff(theta, config.arrival, config.fading, config.channel, b.mu, b.beta)
        if not sol.stable:
            raise InstabilityError(f"solved policy has mean net flow {sol.mean_net_flow:.6g} <= 0", sol.mean_net_flow)
        return ResolvedPolicy(sol.policy(), theta, sol, sol.mean_net_flow)
    flow, stable = _mean_flow(policy, config)
    if not stable:
        raise InstabilityError(
            f"{policy!r} has mean net flow {flow:.6g} <= 0: the battery drains and no steady state exists", flow
        )
    theta = solve_decay_rate(policy, config.arrival, config.fading, config.channel, b.mu, b.beta)
    return ResolvedPolicy(policy, theta, None, flow)


def _batch_stderr(batches, freq, total):
    if len(batches) < 2 or total == 0:
        return math.nan
    n = np.array([b[0] for b in batches], dtype=float)
    c = np.array([b[1] for b in batches], dtype=float)
    k = len(batches)
    return float(math.sqrt(k / (k - 1) * np.sum((c - freq * n) ** 2)) / total)


def run_trace(config: ScenarioConfig, resolved: ResolvedPolicy | None = None, backend=None) -> TraceStats:
    """Simulate one trace and collect post-burn-in statistics."""
    resolved = resolve_policy(config) if resolved is None else resolved
    advance = kernels.get_advance(backend)
    policy = resolved.policy
    b = config.battery
    ch = config.channel
    grid = config.tail_grid if config.tail_grid is not None else default_threshold_grid(b.e_c)
    thresholds = np.array((b.e_c,) + tuple(grid), dtype=float)
    nt = thresholds.size

    energy0 = float(b.e_max if config.initial_energy is None else config.initial_energy)
    state = np.array([energy0])
    sums = np.zeros(len(kernels.SUM_FIELDS))
    counts = np.zeros(len(kernels.COUNT_FIELDS), dtype=np.int64)
    exceed = np.zeros(nt, dtype=np.int64)
    entries = np.zeros(nt, dtype=np.int64)
    inside = np.zeros(nt, dtype=np.uint8)
    kind = kernels.POLICY_CODES[policy.kind]
    level = float(policy.parameter) if kind != 2 else 0.0
    rng_u = RngHandle(config.seed, ARRIVAL_STREAM + 2 * config.replicate)
    rng_h = RngHandle(config.seed, FADING_STREAM + 2 * config.replicate)

    args = (float(ch.n_symbols), float(ch.noise_power), float(b.e_max), float(b.mu), float(b.beta), thresholds,
            bool(config.outage_zero_rate))
    batches = []
    energy_start = energy0 if config.burn_in == 0 else None
    done = 0
    while done < config.frames:
        n = min(BATCH, config.frames - done)
        u = np.ascontiguousarray(config.arrival.sample(rng_u, n), dtype=float)
        h = np.ascontiguousarray(config.fading.sample(rng_h, n), dtype=float)
        split = min(max(config.burn_in - done, 0), n)
        if split:
            advance(u[:split], h[:split], kind, level, *args, False, state, sums, counts, exceed, entries, inside)
        if split < n:
            if energy_start is None:
                energy_start = float(state[0])
            before = int(exceed[0])
            advance(u[split:], h[split:], kind, level, *args, True, state, sums, counts, exceed, entries, inside)
            batches.append((n - split, int(exceed[0]) - before))
        done += n

    s = dict(zip(kernels.SUM_FIELDS, sums.tolist()))
    c = dict(zip(kernels.COUNT_FIELDS, counts.tolist()))
    total = c["frames"]
    tail_counts = TailCounts(
        thresholds=tuple(float(t) for t in thresholds[1:]),
        exceed=tuple(int(x) for x in exceed[1:]),
        events=tuple(int(x) for x in entries[1:]),
        frames=total,
        full=c["full"],
    )
    tail = None
    if len(grid) >= 4:
        try:
            tail = estimate_decay_rate(tail_counts)
        except EstimationError:
            pass
    underflow = int(exceed[0]) / total
    return TraceStats(
        policy=policy,
        theta=resolved.theta,
        e_c=b.e_c,
        underflow_freq=underflow,
        underflow_events=int(entries[0]),
        underflow_stderr=_batch_stderr(batches, underflow, total),
        low_confidence=int(entries[0]) < LOW_CONFIDENCE_EVENTS,
        outage_freq=c["outages"] / total,
        delta_hat=c["full"] / total,
        nonfull_freq=(total - c["full"]) / total,
        overflow_loss_rate=s["overflow"] / total,
        mean_service_rate=s["rate"] / total,
        mean_consumed=s["consumed"] / total,
        demand_met_freq=c["demand_met"] / total,
        tail_counts=tail_counts,
        tail=tail,
        frames_counted=total,
        audit=EnergyAudit(
            harvested=s["harvested"],
            consumed=s["consumed"],
            overflow=s["overflow"],
            charge_loss=s["charge_loss"],
            discharge_loss=s["discharge_loss"],
            energy_start=energy_start,
            energy_end=float(state[0]),
        ),
        backend=kernels.BACKEND if backend is None else backend,
    )


def _map(func, tasks, workers):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(min(workers, len(tasks))) as pool:
            return list(pool.map(func, tasks))
    return [func(t) for t in tasks]


def run_replications(config: ScenarioConfig, replications, workers=1, backend=None):
    """Independent traces of the same scenario on disjoint random streams."""
    tasks = [(replace(config, replicate=config.replicate + r), None, backend) for r in range(replications)]
    return _map(_trace_task, tasks, workers)


def _trace_task(task):
    config, resolved, backend = task
    return run_trace(config, resolved, backend)


# ---------------------------------------------------------------------------
# sweeps


def with_parameter(config: ScenarioConfig, path: str, value) -> ScenarioConfig:
    """Copy of ``config`` with one dotted parameter replaced.

    ``battery.e_c`` keeps ``e_max`` and moves ``e_min``.  Policy paths apply
    to whichever policy form is configured (``policy.theta``, ``policy.p``,
    ``policy.epsilon``, ...).
    """
    parts = path.split(".")
    try:
        if len(parts) == 1:
            return replace(config, **{parts[0]: value})
        if len(parts) != 2:
            raise ConfigurationError(f"bad parameter path {path!r}")
        section, name = parts
        sub = getattr(config, section)
        if section == "battery" and name == "e_c":
            new = sub.with_feasible_capacity(float(value))
        elif section == "policy" and isinstance(sub, PolicyConstraint) and name in ("theta", "target_prob"):
            other = "target_prob" if name == "theta" else "theta"
            new = replace(sub, **{name: value, other: None})
        else:
            if name not in {f.name for f in fields(sub)}:
                raise ConfigurationError(f"{type(sub).__name__} has no parameter {name!r}")
            new = replace(sub, **{name: value})
        return replace(config, **{section: new})
    except AttributeError:
        raise ConfigurationError(f"unknown parameter section in {path!r}") from None
    except TypeError as exc:
        raise ConfigurationError(f"cannot set {path!r}: {exc}") from None


@dataclass(frozen=True)
class SweepRow:
    value: object
    e_c: float
    theta: float
    stats: TraceStats | None
    approx_exp: float
    approx_refined: float
    error: str | None = None

    @property
    def empirical_underflow(self):
        return self.stats.underflow_freq if self.stats else math.nan

    @property
    def delta_hat(self):
        return self.stats.delta_hat if self.stats else math.nan

    @property
    def events(self):
        return self.stats.underflow_events if self.stats else 0

    @property
    def low_confidence(self):
        return self.stats.low_confidence if self.stats else True


def _sweep_task(task):
    config, backend = task
    if isinstance(config, str):
        return config
    try:
        return run_trace(config, backend=backend)
    except ModelError as exc:
        return f"{type(exc).__name__}: {exc}"


def run_sweep(base: ScenarioConfig, parameter: str, values, workers=1, backend=None):
    """One trace per swept value, with exponential and refined approximations.

    Rows use the base seed, so each is reproducible on its own and all rows
    share common random numbers.  A failing point yields a row whose
    ``error`` is set; the sweep continues.
    """
    configs = []
    for v in values:
        try:
            configs.append(with_parameter(base, parameter, v))
        except ModelError as exc:
            configs.append(f"{type(exc).__name__}: {exc}")
    results = _map(_sweep_task, [(c, backend) for c in configs], workers)
    rows = []
    for v, cfg, res in zip(values, configs, results):
        if isinstance(res, str):
            e_c = cfg.battery.e_c if isinstance(cfg, ScenarioConfig) else math.nan
            rows.append(SweepRow(v, e_c, math.nan, None, math.nan, math.nan, res))
            continue
        theta = res.theta
        if math.isfinite(theta) and theta > 0:
            approx = underflow_prob_approx(theta, res.e_c)
            with warnings.catch_warnings():
                # the regime warning was already issued for this point
                warnings.simplefilter("ignore", LargeDeviationWarning)
                refined = refined_underflow_approx(theta, res.e_c, res.delta_hat)
        else:
            approx = refined = math.nan
        rows.append(SweepRow(v, res.e_c, theta, res, approx, refined))
    return rows


# ---------------------------------------------------------------------------
# policy comparison


@dataclass(frozen=True)
class CompareRow:
    policy: str
    theta: float
    e_c: float
    mean_service_rate: float
    outage_freq: float
    parameter: float


def compare_policies(config: ScenarioConfig, policies, e_c_values, workers=1, backend=None):
    """Average service rate of each policy across feasible capacities.

    The demand never draws below ``e_min``, so only the ``e_c``-wide window
    of the battery takes part in the dynamics; each point therefore runs a
    battery of size ``e_c``.  Policies are resolved once (their parameters
    do not depend on ``e_c``) and every point shares the scenario seed.
    """
    resolved = []
    for pol in policies:
        resolved.append(resolve_policy(replace(config, policy=pol)))
    tasks, keys = [], []
    for e_c in e_c_values:
        battery = replace(config.battery, e_max=float(e_c), e_min=0.0)
        for pol, res in zip(policies, resolved):
            tasks.append((replace(config, battery=battery, policy=res.policy, tail_grid=()), res, backend))
            keys.append((res, float(e_c)))
    stats = _map(_trace_task, tasks, workers)
    return [
        CompareRow(res.policy.kind, res.theta, e_c, st.mean_service_rate, st.outage_freq, float(res.policy.parameter))
        for (res, e_c), st in zip(keys, stats)
    ]
