"""Energy-harvesting transmitter with a lossy battery.

Solve energy-demand policies from an underflow-probability target via the
balance equation of the net battery flow, and check the predictions by
simulating the finite battery and the fading channel.
"""
from .analysis import (
    BalanceSolution,
    DecayRateTarget,
    TailCounts,
    TailEstimate,
    estimate_decay_rate,
    mean_net_flow,
    mgf_constant_demand,
    mgf_numeric,
    refined_underflow_approx,
    solve_constant_demand,
    solve_decay_rate,
    solve_waterfilling_cutoff,
    stability_limit,
    theta_from_constraint,
    underflow_prob_approx,
)
from .battery import BatteryParams, BatteryState, StepOutcome, available_space, net_flow, step
from .channel import ChannelParams, Constant, NoStorage, WaterFilling, consumed_energy, demand, service_rate
from .core import (
    ConstantFading,
    EmpiricalArrivals,
    EmpiricalFading,
    ExponentialArrivals,
    ExponentialFading,
    RngHandle,
    sample_arrival,
    sample_fading,
)
from .errors import (
    ConfigurationError,
    ContractViolation,
    EstimationError,
    InstabilityError,
    LargeDeviationWarning,
    ModelError,
    NumericalAccuracyError,
    SolverError,
    UnderSampledError,
)
from .harness import (
    PolicyConstraint,
    ScenarioConfig,
    TraceStats,
    compare_policies,
    run_replications,
    run_sweep,
    run_trace,
)
from .kernels import BACKEND

__version__ = "0.1.0"
