"""Reference parameter set and grids used by the bundled experiments."""
import math

from .battery import BatteryParams
from .channel import ChannelParams
from .core import ExponentialArrivals, ExponentialFading
from .harness import PolicyConstraint, ScenarioConfig

E_MAX = 15_000.0
ARRIVAL_RATE = 0.01
MU = 0.85
BETA = 0.80
REFERENCE_E_C = 10_000.0
# decay rates for underflow targets 1e-2, 1e-4 and 1e-6 at e_c = 1e4
TARGET_PROBS = (1e-2, 1e-4, 1e-6)
THETAS = tuple(-math.log(q) / REFERENCE_E_C for q in TARGET_PROBS)
UNDERFLOW_E_C_GRID = tuple(float(x) for x in range(1000, 10_001, 1000))
RATE_E_C_GRID = (100.0, 200.0, 500.0, 1000.0, 2000.0, 5000.0, 10_000.0)
FRAMES = 10_000_000
BURN_IN = 100_000


def reference_battery(e_c=REFERENCE_E_C):
    return BatteryParams(e_max=E_MAX, e_min=E_MAX - e_c, mu=MU, beta=BETA)


def reference_scenario(policy=None, e_c=REFERENCE_E_C, frames=FRAMES, burn_in=BURN_IN, seed=1, **kw):
    """Scenario with the reference battery; ``frames`` counts post-burn-in frames."""
    if policy is None:
        policy = PolicyConstraint("constant", theta=THETAS[0])
    return ScenarioConfig(
        battery=reference_battery(e_c),
        arrival=ExponentialArrivals(ARRIVAL_RATE),
        fading=ExponentialFading(1.0),
        channel=ChannelParams(100, 1.0),
        policy=policy,
        frames=frames + burn_in,
        burn_in=burn_in,
        seed=seed,
        **kw,
    )
