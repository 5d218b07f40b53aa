"""Funnel-control simulation and verification toolkit.

Implements a constant-gain funnel controller for systems with higher
relative degree, the classical time-varying-gain comparison design, the
auxiliary error-variable machinery behind the tracking guarantee, causal
operator models (delay, hysteresis, linear internal dynamics), and a
scenario-driven CLI built around the mass-on-car benchmark.
"""

from .controllers import (
    ConstantGainController,
    ControlOutput,
    GainFunctions,
    GainSingularity,
    StageSingularity,
    TimeVaryingGainController,
)
from .errchain import (
    ErrorChainParams,
    FeasibilityReport,
    StageDerivativeBounds,
    as_stack,
    check_feasibility,
    derivative_bounds,
    left_shift,
    xi_all,
    xi_binomial,
    xi_matrix,
    xi_recursive,
)
from .funnels import FunnelFunction, MembershipReport, default_grid, verify_funnel
from .jets import Jet, jet_lift, squared_norm_jet
from .plants import (
    CausalOperator,
    ConstantDisturbance,
    DelayOperator,
    FiniteEscapeError,
    IntegratorChainPlant,
    LinearInternalDynamics,
    MassOnCarPlant,
    PlayOperator,
    RelayOperator,
    SinusoidDisturbance,
    ZeroDisturbance,
)
from .sim import (
    CosineReference,
    Event,
    EventReport,
    IntegratorConfig,
    PolynomialSplineReference,
    TrajectoryLog,
    integrate_closed_loop,
    monitor_trajectory,
    rk4_step,
    rk45_step,
    rms_error,
)

__version__ = "0.1.0"
