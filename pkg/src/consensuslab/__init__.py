"""consensuslab: build, simulate, and verify cascaded consensus protocols.

High-order coordination laws are assembled as series compositions of
first-order consensus operators; the toolkit integrates the resulting
cascade (or the explicit second-order controllers on a double-integrator
plant), handles bounded time-varying delays method-of-steps style, and
checks consensus residuals and stability bounds numerically.
"""

from .dynamics import (
    Cascade,
    cascade_field,
    cascade_rhs,
    compositional_controller,
    conventional_controller,
    gps_velocity_controller,
    matched_cascade_state,
    naive_serial_controller,
    reconstruct_plant,
)
from .exceptions import (
    ConfigError,
    ConsensusLabError,
    DivergenceError,
    GraphError,
    InsufficientHistoryError,
    NumericError,
    OperatorError,
    ShapeError,
)
from .graphs import (
    ReachabilityReport,
    WeightedDigraph,
    build_laplacian,
    communication_footprint,
    delta_graph,
    graph_from_edges,
    laplacian_pseudoinverse,
    path_graph,
    spanning_tree_check,
)
from .metrics import (
    ConsensusReport,
    build_report,
    check_iss_bound,
    common_root_over_windows,
    disagreement_seminorm,
    fit_iss_constants,
    integrated_connectivity,
    laplacian_seminorm,
    nth_order_residuals,
    peak_disagreement,
    regime_entry_time,
    sinusoid_gates,
)
from .operators import (
    ConsensusOperator,
    DelayedAbsoluteVelocity,
    DelayedRelative,
    LinearStatic,
    LinearTimeVarying,
    Saturated,
    check_relative_invariance,
    estimate_lipschitz,
)
from .sim import (
    ConstantDelay,
    IntegratorConfig,
    PoissonSampledDelay,
    RampDelay,
    Trajectory,
    counterexample_two_agent,
    integrate,
    poisson_delay_bank,
    sample_poisson_delays,
)
from .config import emit_scenario, parse_scenario
from .presets import PRESETS, preset
from .scenario import Scenario, StageSpec, simulate_scenario, with_controller

__version__ = "0.1.0"
