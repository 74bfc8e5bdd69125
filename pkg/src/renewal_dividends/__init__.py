"""Optimal dividends with a finite horizon in a renewal (Sparre Andersen) risk model.

The state is (s, x, w): time, surplus and time elapsed since the last claim.
``hjbgrid`` solves the variational inequality for the value function on a
grid, ``montecarlo`` evaluates fixed dividend strategies by simulation, and
``verify`` checks solved fields against the known structural properties.
"""

from .errors import CFLError, ConfigurationError, DomainError, NumericalFailure
from .hjbgrid import (
    AnalyticBounds,
    GridSpec,
    ValueField,
    distance_to_boundary,
    extract_free_boundary,
    residual_check,
    solve_vi,
    subsolution_bound,
    supersolution_bound,
)
from .model import (
    ConstantHazard,
    DeterministicClaims,
    EmpiricalClaims,
    ErlangTwoHazard,
    ExponentialClaims,
    ModelParams,
    PiecewiseLinearHazard,
    claims_from_dict,
    hazard_from_dict,
)
from .montecarlo import EstimateWithCI, estimate_value, merge_estimates
from .paths import (
    Barrier,
    LiquidateNow,
    NoDividend,
    PayAllAtT,
    ThresholdRate,
    simulate_path,
    strategy_from_dict,
)

__version__ = "0.1.0"
