"""Exception hierarchy.

The CLI maps these onto exit codes: configuration problems exit 1, solver
failures exit 2 and refusals to simulate an unstable policy exit 3.
"""


class ModelError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(ModelError, ValueError):
    """Invalid parameters, distributions or config files."""


class ContractViolation(ModelError, TypeError):
    """An operation was called on an input it is not defined for."""


class SolverError(ModelError):
    """A root search could not bracket or converge."""


class NumericalAccuracyError(SolverError):
    """Quadrature did not reach the requested accuracy."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InstabilityError(ModelError):
    """The demand policy has non-positive mean net flow, so the battery drains."""

    def __init__(self, message, mean_net_flow=None):
        super().__init__(message)
        self.mean_net_flow = mean_net_flow


class EstimationError(ModelError):
    """An empirical decay rate could not be estimated."""


class UnderSampledError(EstimationError):
    """A threshold saw too few exceedance events to be trusted."""

    def __init__(self, message, threshold=None, events=None):
        super().__init__(message)
        self.threshold = threshold
        self.events = events


class LargeDeviationWarning(UserWarning):
    """The exponential tail approximation is being used outside its regime."""
