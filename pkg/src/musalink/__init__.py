"""Grant-free NOMA uplink toolkit: analysis, optimization and simulation.

Analytical SINR coverage of a MUSA-style grant-free uplink to a hovering
aggregator, finite-blocklength reliability of the short packets, adaptive
selection of the per-frame slot count, and a seeded Monte Carlo link
simulator that serves as the ground truth for the analytics.
"""

from .analytic import (
    CoverageReport,
    IntensitySet,
    SlotStatistics,
    collision_free_prob,
    conditional_coverage,
    frame_coverage_prob,
    laplace_collided,
    laplace_singleton,
    ordered_distance_pdf,
    singleton_count,
    slot_occupancy_prob,
    slot_statistics,
)
from .config import (
    ChannelParams,
    ConfigError,
    FrameParams,
    GeometryParams,
    PowerMode,
    PowerPolicy,
    ReliabilityParams,
    Scenario,
    SystemConfig,
    TrafficParams,
    db_to_linear,
    dbm_to_watts,
    default_config,
    linear_to_db,
    load_config,
    serialize_config,
    validate_config,
    watts_to_dbm,
)
from .optimizer import (
    BruteForceResult,
    EoIDecision,
    InfeasibleError,
    OptimizerOutput,
    adaptive_slots,
    brute_force_slots,
    detect_eoi,
    estimate_lambda_hat,
    solve_n_epsilon,
)
from .quadrature import QuadratureError, QuadratureResult, adaptive_simpson
from .shortpacket import (
    BlocklengthPoint,
    error_prob_ln_form,
    max_snr_proxy,
    packet_error_prob,
    q_function,
)
from .simulator import (
    CoverageEstimate,
    DecodingOutcome,
    FailureCause,
    FrameStats,
    Scheme,
    SlotRealization,
    assign_slots_codes,
    code_pool,
    estimate_coverage,
    generate_traffic,
    mmse_weights,
    run_frame,
    sample_deployment,
    sic_decode,
)

__version__ = "0.1.0"
