"""Large-deviation layer: balance equation, demand solvers, tail estimates.

The available space in the battery behaves like a queue fed by ``-z`` where
``z`` is the per-frame net flow.  For IID frames its tail decays at the rate
``theta`` solving ``E[exp(-theta*z)] = 1``; the helpers here evaluate that
moment generating function, solve it for demand-policy parameters (or for
``theta`` given a policy) and fit decay rates to simulated tails.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .battery import net_flow_array
from .channel import ChannelParams, Constant, NoStorage, WaterFilling, demand_array
from .core import (
    MONTE_CARLO_STREAM_BASE,
    ConstantFading,
    EmpiricalArrivals,
    EmpiricalFading,
    ExponentialArrivals,
    ExponentialFading,
    RngHandle,
)
from .errors import (
    ConfigurationError,
    EstimationError,
    InstabilityError,
    LargeDeviationWarning,
    NumericalAccuracyError,
    SolverError,
    UnderSampledError,
)

CONSTANT_DEMAND_TOL = 1e-10
WATERFILLING_TOL = 1e-9
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
MC_CHUNK = 1 << 20
MIN_TAIL_EVENTS = 50


@dataclass(frozen=True)
class DecayRateTarget:
    theta: float
    target_prob: float | None = None
    e_c: float | None = None

    def __post_init__(self):
        if not self.theta > 0:
            raise ConfigurationError(f"decay rate must be > 0, got {self.theta!r}")


@dataclass(frozen=True)
class BalanceSolution:
    """Root of the balance equation for one policy parameter.

    ``policy_parameter`` is ``p*`` for constant demand or the cutoff
    ``epsilon`` for water-filling.
    """

    policy_parameter: float
    mgf_residual: float
    mean_net_flow: float
    stable: bool
    theta: float
    kind: str
    iterations: int = 0

    def policy(self):
        if self.kind == "constant":
            return Constant(self.policy_parameter)
        return WaterFilling(self.policy_parameter)


@dataclass(frozen=True)
class TailCounts:
    """Raw exceedance statistics of the available space.

    ``exceed[k]`` counts frames with space >= ``thresholds[k]``; ``events[k]``
    counts distinct entries into that region (equal to ``exceed`` for IID
    samples).  ``full`` counts frames with zero available space.
    """

    thresholds: tuple
    exceed: tuple
    events: tuple
    frames: int
    full: int = 0


@dataclass(frozen=True)
class TailEstimate:
    thresholds: tuple
    log_probs: tuple
    theta_hat: float
    fit_r_squared: float
    delta_hat: float
    events: tuple = field(default=())


# ---------------------------------------------------------------------------
# moment generating function of the net flow


def _exp(x):
    return math.exp(x) if x < 700.0 else math.inf


def mgf_constant_demand(theta, p, lambda_u, mu, beta):
    """``E[exp(-theta*z)]`` for constant demand ``p`` and exponential arrivals.

    Closed form of the two-piece integral: the discharge branch contributes
    ``lb/(lb+theta) * (exp(theta*p/beta) - exp(-l*p))`` with ``lb = l*beta``,
    the charge branch ``l/(l+theta*mu) * exp(-l*p)``.
    """
    if not theta > 0:
        raise ConfigurationError(f"theta must be > 0, got {theta!r}")
    if not lambda_u > 0:
        raise ConfigurationError(f"lambda_u must be > 0, got {lambda_u!r}")
    if not (0 < mu <= 1 and 0 < beta <= 1):
        raise ConfigurationError(f"mu and beta must be in (0, 1], got {mu!r}, {beta!r}")
    if p < 0:
        raise ConfigurationError(f"demand must be >= 0, got {p!r}")
    lb = lambda_u * beta
    tail = math.exp(-lambda_u * p)
    return lb / (lb + theta) * (_exp(theta * p / beta) - tail) + lambda_u / (lambda_u + theta * mu) * tail


def net_flow_density(z, p, lambda_u, mu, beta):
    """Density of ``z`` under constant demand ``p`` and exponential arrivals."""
    z = np.asarray(z, dtype=float)
    lam = lambda_u
    discharge = beta * lam * np.exp(-lam * (beta * z + p))
    charge = lam / mu * np.exp(-lam * (z / mu + p))
    return np.where(z >= 0, charge, np.where(z >= -p / beta, discharge, 0.0))


def _quad(f, a, b, what):
    val, err, info = integrate.quad(f, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=500, full_output=1)[:3]
    # ier 2 (round-off) at tolerance this tight is benign when err is small
    if info.get("last", 0) >= 500 or (err > 1e-9 and err > 1e-9 * abs(val)):
        raise NumericalAccuracyError(
            f"quadrature for {what} did not converge", {"value": val, "abserr": err, "interval": (a, b)}
        )
    return val, err


def _check_mu_beta(mu, beta):
    if not (0 < mu <= 1 and 0 < beta <= 1):
        raise ConfigurationError(f"mu and beta must be in (0, 1], got {mu!r}, {beta!r}")


def _conditional_mgf(theta, p, arrival, mu, beta, closed_form=True):
    """``E_u[exp(-theta*z(u, p))]`` for a fixed demand; returns (value, error)."""
    if isinstance(arrival, EmpiricalArrivals):
        z = net_flow_array(arrival.samples, p, mu, beta)
        return float(np.mean(np.exp(-theta * z))), 0.0
    if isinstance(arrival, ExponentialArrivals):
        if closed_form:
            return mgf_constant_demand(theta, p, arrival.rate, mu, beta), 0.0
        lam = arrival.rate
        lo, e1 = (0.0, 0.0)
        if p > 0:
            lo, e1 = _quad(lambda u: math.exp(-theta * (u - p) / beta - lam * u) * lam, 0.0, p, "discharge branch")
        hi, e2 = _quad(lambda u: math.exp(-theta * mu * (u - p) - lam * u) * lam, p, math.inf, "charge branch")
        return lo + hi, e1 + e2
    raise ConfigurationError(f"unsupported arrival process {arrival!r}")


def _conditional_mean_flow(p, arrival, mu, beta):
    """``E_u[z(u, p)]`` for a fixed demand."""
    if isinstance(arrival, EmpiricalArrivals):
        return float(np.mean(net_flow_array(arrival.samples, p, mu, beta)))
    if isinstance(arrival, ExponentialArrivals):
        m = arrival.mean
        surplus = m * math.exp(-arrival.rate * p)  # E[(u-p)^+]
        deficit = p - m + surplus  # E[(p-u)^+]
        return mu * surplus - deficit / beta
    raise ConfigurationError(f"unsupported arrival process {arrival!r}")


def _average_over_fading(g, policy, fading, channel):
    """``E_h[g(p(h))]`` for a water-filling policy; returns (value, error)."""
    eps = policy.epsilon
    if isinstance(fading, ConstantFading):
        return g(float(demand_array(policy, fading.gain, channel)))
    if isinstance(fading, EmpiricalFading):
        demands = demand_array(policy, np.asarray(fading.samples), channel)
        vals = [g(float(d)) for d in demands]
        return float(np.mean([v for v, _ in vals])), float(np.mean([e for _, e in vals]))
    if isinstance(fading, ExponentialFading):
        m = fading.mean
        n0 = channel.noise_energy
        silent, silent_err = g(0.0)
        value = -math.expm1(-eps / m) * silent
        err = silent_err

        def integrand(h):
            return g(n0 * (1.0 / eps - 1.0 / h))[0] * math.exp(-h / m) / m

        active, qerr = _quad(integrand, eps, math.inf, "water-filling outer integral")
        return value + active, err + qerr
    raise ConfigurationError(f"unsupported fading process {fading!r}")


def mgf_numeric(
    theta,
    policy,
    arrival,
    fading,
    channel: ChannelParams,
    mu,
    beta,
    method="quadrature",
    n=10**7,
    seed=0,
    workers=1,
):
    """Estimate ``E[exp(-theta*z)]`` for any demand policy.

    ``method="quadrature"`` integrates numerically over the arrival density
    (and, for water-filling, over the fading density with the per-demand
    arrival expectation in closed form).  ``method="monte-carlo"`` averages
    ``n`` sampled frames.  Returns ``(value, error_estimate)``; for Monte Carlo
    the error is the standard error.
    """
    if not theta > 0:
        raise ConfigurationError(f"theta must be > 0, got {theta!r}")
    _check_mu_beta(mu, beta)
    if isinstance(policy, NoStorage):
        raise ConfigurationError("NoStorage bypasses the battery; its net flow is undefined")
    if method == "quadrature":
        if isinstance(policy, Constant):
            return _conditional_mgf(theta, policy.p, arrival, mu, beta, closed_form=False)
        return _average_over_fading(
            lambda p: _conditional_mgf(theta, p, arrival, mu, beta), policy, fading, channel
        )
    if method == "monte-carlo":
        return _mgf_monte_carlo(theta, policy, arrival, fading, channel, mu, beta, int(n), seed, workers)
    raise ConfigurationError(f"unknown method {method!r}")


def _mgf_chunk(args):
    theta, policy, arrival, fading, channel, mu, beta, size, seed, k = args
    u = arrival.sample(RngHandle(seed, MONTE_CARLO_STREAM_BASE + 2 * k), size)
    h = fading.sample(RngHandle(seed, MONTE_CARLO_STREAM_BASE + 2 * k + 1), size)
    x = np.exp(-theta * net_flow_array(u, demand_array(policy, h, channel), mu, beta))
    return float(np.sum(x)), float(np.sum(x * x))


def _mgf_monte_carlo(theta, policy, arrival, fading, channel, mu, beta, n, seed, workers):
    if n < 2:
        raise ConfigurationError("Monte Carlo needs at least 2 samples")
    sizes = [MC_CHUNK] * (n // MC_CHUNK)
    if n % MC_CHUNK:
        sizes.append(n % MC_CHUNK)
    tasks = [(theta, policy, arrival, fading, channel, mu, beta, s, seed, k) for k, s in enumerate(sizes)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_mgf_chunk, tasks))
    else:
        parts = [_mgf_chunk(t) for t in tasks]
    # fixed merge order keeps the result independent of the worker count
    s1 = s2 = 0.0
    for a, b in parts:
        s1 += a
        s2 += b
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0) * n / (n - 1)
    return mean, math.sqrt(var / n)


def mean_net_flow(policy, arrival, fading, channel: ChannelParams, mu, beta):
    """``E[z]`` and whether it is positive (the stability condition).

    NoStorage never touches the battery, so it is reported as stable with an
    undefined (NaN) mean flow.
    """
    _check_mu_beta(mu, beta)
    if isinstance(policy, NoStorage):
        return math.nan, True
    if isinstance(policy, Constant):
        value = _conditional_mean_flow(policy.p, arrival, mu, beta)
    else:
        value, _ = _average_over_fading(
            lambda p: (_conditional_mean_flow(p, arrival, mu, beta), 0.0), policy, fading, channel
        )
    return value, value > 0


# ---------------------------------------------------------------------------
# root finding


def bisect_root(f, lo, hi, f_lo=None, f_hi=None, ftol=0.0, xtol=0.0, max_iter=400):
    """Bisection on a bracket where ``f`` changes sign.

    Stops once ``|f(x)| <= ftol`` or the bracket is narrower than ``xtol``.
    Returns ``(x, f(x), iterations)``.
    """
    f_lo = f(lo) if f_lo is None else f_lo
    f_hi = f(hi) if f_hi is None else f_hi
    if f_lo == 0:
        return lo, f_lo, 0
    if f_hi == 0:
        return hi, f_hi, 0
    if (f_lo > 0) == (f_hi > 0):
        raise SolverError(f"no sign change on [{lo}, {hi}]: f={f_lo}, {f_hi}")
    best = (lo, f_lo) if abs(f_lo) < abs(f_hi) else (hi, f_hi)
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return best[0], best[1], it
        fm = f(mid)
        if abs(fm) < abs(best[1]):
            best = (mid, fm)
        if abs(fm) <= ftol or hi - lo <= xtol:
            return mid, fm, it
        if (fm > 0) == (f_lo > 0):
            lo, f_lo = mid, fm
        else:
            hi, f_hi = mid, fm
    return best[0], best[1], max_iter


def solve_constant_demand(theta, lambda_u, mu, beta, tol=CONSTANT_DEMAND_TOL, max_doublings=200):
    """Constant demand ``p*`` with ``E[exp(-theta*z)] = 1`` (exponential arrivals).

    The MGF is increasing in ``p`` and below one at ``p = 0``, so the upper
    bracket end is doubled from the mean arrival until the MGF exceeds one.
    """
    f = lambda p: mgf_constant_demand(theta, p, lambda_u, mu, beta) - 1.0
    f_lo = f(0.0)
    hi = 1.0 / lambda_u
    f_hi = f(hi)
    doublings = 0
    while f_hi <= 0:
        doublings += 1
        if doublings > max_doublings:
            raise SolverError(f"could not bracket p* for theta={theta}: MGF({hi}) - 1 = {f_hi}")
        hi *= 2.0
        f_hi = f(hi)
    p, res, iters = bisect_root(f, 0.0, hi, f_lo, f_hi, ftol=tol)
    flow = _conditional_mean_flow(p, ExponentialArrivals(lambda_u), mu, beta)
    return BalanceSolution(p, abs(res), flow, flow > 0, theta, "constant", iters)


def solve_constant_demand_for(theta, arrival, mu, beta, tol=CONSTANT_DEMAND_TOL):
    """:func:`solve_constant_demand` for any supported arrival process."""
    if isinstance(arrival, ExponentialArrivals):
        return solve_constant_demand(theta, arrival.rate, mu, beta, tol)
    f = lambda p: _conditional_mgf(theta, p, arrival, mu, beta)[0] - 1.0
    hi = max(arrival.mean, 1.0)
    f_hi = f(hi)
    for _ in range(200):
        if f_hi > 0:
            break
        hi *= 2.0
        f_hi = f(hi)
    else:
        raise SolverError(f"could not bracket p* for theta={theta}")
    p, res, iters = bisect_root(f, 0.0, hi, None, f_hi, ftol=tol)
    flow = _conditional_mean_flow(p, arrival, mu, beta)
    return BalanceSolution(p, abs(res), flow, flow > 0, theta, "constant", iters)


def solve_waterfilling_cutoff(
    theta, arrival, fading, channel: ChannelParams, mu, beta, tol=WATERFILLING_TOL, max_steps=200
):
    """Water-filling cutoff ``epsilon`` with ``E[exp(-theta*z)] = 1``.

    The MGF decreases in ``epsilon`` (a larger cutoff demands less), tending
    to its zero-demand value below one.  The bracket is found by doubling
    and halving in ``epsilon``; the sign pattern along every point visited
    must change exactly once, otherwise the root is not unique and a
    :class:`SolverError` is raised.  Bisection runs on ``log(epsilon)``.
    """
    if not theta > 0:
        raise ConfigurationError(f"theta must be > 0, got {theta!r}")
    f = lambda x: mgf_numeric(theta, WaterFilling(math.exp(x)), arrival, fading, channel, mu, beta)[0] - 1.0
    visited = {}
    x_hi = math.log(fading.mean)
    visited[x_hi] = f_hi = f(x_hi)
    steps = 0
    while f_hi >= 0:
        steps += 1
        if steps > max_steps:
            raise SolverError(f"MGF stays >= 1 up to epsilon={math.exp(x_hi)} (f={f_hi})")
        x_hi += math.log(2.0)
        visited[x_hi] = f_hi = f(x_hi)
    x_lo = x_hi - math.log(2.0)
    visited[x_lo] = f_lo = f(x_lo)
    steps = 0
    while f_lo <= 0:
        steps += 1
        if steps > max_steps:
            raise SolverError(
                f"no sign change: MGF-1 = {f_lo} at epsilon={math.exp(x_lo)}, {f_hi} at epsilon={math.exp(x_hi)}"
            )
        x_hi, f_hi = x_lo, f_lo
        x_lo -= math.log(2.0)
        visited[x_lo] = f_lo = f(x_lo)
    signs = [visited[x] > 0 for x in sorted(visited)]
    changes = sum(a != b for a, b in zip(signs, signs[1:]))
    if changes != 1:
        raise SolverError(f"balance equation changes sign {changes} times in epsilon; root not unique")
    x, res, iters = bisect_root(f, x_lo, x_hi, f_lo, f_hi, ftol=tol, xtol=1e-15)
    eps = math.exp(x)
    policy = WaterFilling(eps)
    flow, stable = mean_net_flow(policy, arrival, fading, channel, mu, beta)
    if abs(res) > tol:
        raise SolverError(f"water-filling residual {abs(res):.3g} above tolerance {tol:.3g}")
    return BalanceSolution(eps, abs(res), flow, stable, theta, "waterfilling", iters)


def stability_limit(arrival, mu, beta):
    """Constant demand at which the mean net flow is exactly zero."""
    f = lambda p: _conditional_mean_flow(p, arrival, mu, beta)
    hi = arrival.mean
    p, _, _ = bisect_root(f, 0.0, hi, ftol=0.0, xtol=1e-12 * hi)
    return p


def solve_decay_rate(policy, arrival, fading, channel: ChannelParams, mu, beta, rtol=1e-12):
    """Decay rate ``theta > 0`` implied by a fixed policy.

    Returns ``math.inf`` when the net flow is never negative (the battery
    cannot lose charge).  Raises :class:`InstabilityError` when ``E[z] <= 0``.
    """
    if isinstance(policy, NoStorage):
        return math.nan
    flow, stable = mean_net_flow(policy, arrival, fading, channel, mu, beta)
    if not stable:
        raise InstabilityError(f"mean net flow {flow:.6g} <= 0; no positive decay rate", flow)
    if isinstance(policy, Constant):
        f = lambda x: _conditional_mgf(math.exp(x), policy.p, arrival, mu, beta)[0] - 1.0
    else:
        f = lambda x: mgf_numeric(math.exp(x), policy, arrival, fading, channel, mu, beta)[0] - 1.0
    scale = 1.0 / arrival.mean
    x_hi = math.log(1e-2 * scale)
    f_hi = f(x_hi)
    while f_hi <= 0:
        if x_hi > math.log(1e6 * scale):
            return math.inf
        x_hi += math.log(2.0)
        f_hi = f(x_hi)
    x_lo = x_hi - math.log(2.0)
    f_lo = f(x_lo)
    while f_lo >= 0:
        x_lo -= math.log(2.0)
        f_lo = f(x_lo)
        if x_lo < math.log(1e-12 * scale):
            raise SolverError("could not bracket the decay rate from below")
    x, _, _ = bisect_root(f, x_lo, x_hi, f_lo, f_hi, ftol=0.0, xtol=rtol)
    return math.exp(x)


# ---------------------------------------------------------------------------
# exponential tail approximations


def theta_from_constraint(target_prob, e_c):
    """Decay rate that makes ``exp(-theta*e_c)`` equal ``target_prob``."""
    if not 0 < target_prob < 1:
        raise ConfigurationError(f"target probability must be in (0, 1), got {target_prob!r}")
    if not e_c > 0:
        raise ConfigurationError(f"e_c must be > 0, got {e_c!r}")
    return DecayRateTarget(-math.log(target_prob) / e_c, target_prob, e_c)


def _check_regime(theta, e_c):
    if theta < 0 or e_c < 0:
        raise ConfigurationError(f"theta and e_c must be >= 0, got {theta!r}, {e_c!r}")
    if theta * e_c < 1.0:
        warnings.warn(
            f"theta*e_c = {theta * e_c:.3g} < 1: exponential tail approximation is coarse at this capacity",
            LargeDeviationWarning,
            stacklevel=3,
        )


def underflow_prob_approx(theta, e_c):
    """``exp(-theta*e_c)``, the large-capacity underflow probability."""
    _check_regime(theta, e_c)
    return math.exp(-theta * e_c)


def refined_underflow_approx(theta, e_c, delta):
    """``delta*exp(-theta*e_c)`` with ``delta`` the probability the battery is full."""
    if not 0 <= delta <= 1:
        raise ConfigurationError(f"delta must be in [0, 1], got {delta!r}")
    _check_regime(theta, e_c)
    return delta * math.exp(-theta * e_c)


# ---------------------------------------------------------------------------
# empirical decay rate


def default_threshold_grid(e_c, n=8):
    """``n`` evenly spaced thresholds on ``[0.2*e_c, 0.8*e_c]``."""
    return tuple(float(x) for x in np.linspace(0.2 * e_c, 0.8 * e_c, n))


def tail_counts_from_samples(samples, thresholds):
    """Exceedance counts for IID available-space samples."""
    s = np.sort(np.asarray(samples, dtype=float))
    thresholds = tuple(float(t) for t in thresholds)
    exceed = tuple(int(s.size - np.searchsorted(s, t, side="left")) for t in thresholds)
    full = int(np.count_nonzero(s == 0))
    return TailCounts(thresholds, exceed, exceed, int(s.size), full)


def estimate_decay_rate(tail, threshold_grid=None, min_events=MIN_TAIL_EVENTS):
    """Fit ``log Pr{space >= t}`` against ``t``; the negative slope is ``theta``.

    ``tail`` is a :class:`TailCounts` or an array of IID available-space
    samples.  The fit is least squares weighted by each threshold's event
    count (the inverse of the approximate variance of the log-frequency).
    Every threshold used must have at least ``min_events`` events.
    """
    if not isinstance(tail, TailCounts):
        if threshold_grid is None:
            raise ConfigurationError("a threshold grid is required for raw samples")
        tail = tail_counts_from_samples(tail, threshold_grid)
    pick = range(len(tail.thresholds))
    if threshold_grid is not None:
        index = {t: k for k, t in enumerate(tail.thresholds)}
        try:
            pick = [index[float(t)] for t in threshold_grid]
        except KeyError as exc:
            raise ConfigurationError(f"threshold {exc.args[0]} was not recorded") from None
    t = np.array([tail.thresholds[k] for k in pick])
    exceed = np.array([tail.exceed[k] for k in pick], dtype=float)
    events = np.array([tail.events[k] for k in pick], dtype=float)
    if t.size < 4:
        raise ConfigurationError(f"need at least 4 thresholds, got {t.size}")
    if np.any(np.diff(t) <= 0):
        raise ConfigurationError("thresholds must be strictly increasing")
    for tk, ek in zip(t, events):
        if ek < min_events:
            raise UnderSampledError(
                f"threshold {tk:g} has {int(ek)} exceedance events (< {min_events})", float(tk), int(ek)
            )
    y = np.log(exceed / tail.frames)
    w = events / events.sum()
    tm = np.sum(w * t)
    ym = np.sum(w * y)
    sxx = np.sum(w * (t - tm) ** 2)
    slope = np.sum(w * (t - tm) * (y - ym)) / sxx
    resid = y - (ym + slope * (t - tm))
    syy = np.sum(w * (y - ym) ** 2)
    r2 = 1.0 - np.sum(w * resid**2) / syy if syy > 0 else 0.0
    theta_hat = -float(slope)
    if not theta_hat > 0:
        raise EstimationError(f"tail does not decay (fitted slope {slope:.3g}); decay rate undefined")
    return TailEstimate(
        thresholds=tuple(float(x) for x in t),
        log_probs=tuple(float(x) for x in y),
        theta_hat=theta_hat,
        fit_r_squared=float(r2),
        delta_hat=tail.full / tail.frames,
        events=tuple(int(e) for e in events),
    )
