"""Age of information of age-dependent random access with periodic updates."""

from .analytic import (
    AnalyticSolution,
    DegenerateChain,
    GroupSplit,
    NonConvergence,
    SteadyState,
    SuccessProfile,
    aggregate_profiles,
    analyze,
    average_aoi,
    average_aoi_batch,
    external_steady_state,
    fixed_point_candidates,
    group_split,
    joint_pmf,
    solve_fixed_point,
    success_profile_above,
    success_profile_at,
)
from .model import (
    ADAPTIVE,
    AdaptivePolicy,
    ConfigError,
    FixedPolicy,
    ProtocolConfig,
    decompose_threshold,
    parse_policy,
    validate_config,
)
from .optimizer import (
    AllDegenerate,
    SearchResult,
    aoi_curve,
    compare,
    compare_to_aira,
    optimize_delta,
    optimize_joint,
)
from .simulator import (
    SimConfig,
    SimReport,
    brute_force_frame_oracle,
    match_simulation,
    run_once,
    run_replicated,
    whole_frames,
)


