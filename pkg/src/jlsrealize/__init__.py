"""Minimal realization of jump linear systems from input/output data."""
from .model import (
    JlsModel,
    ModelError,
    Trajectory,
    load_model,
    mean_square_stable,
    minimality_check,
    simulate_random,
    simulate_with_switches,
    validate_model,
    worst_case_sample_bound,
)
from .excitation import ObservationPair, collect_observations, exact_observations, standard_basis
from .oracle import (
    brute_force_expectation,
    expected_ctrl_kron,
    expected_hankel_kron,
    expected_obs_kron,
    hankel_for_copy,
    mean_matrix,
    second_moment,
)
from .realization import (
    assumption4_diagnostic,
    controllability_rank,
    infer_state_dim,
    observability_rank,
    rank_saturation_scan,
)
from .modes import (
    PFConfig,
    estimate_modes,
    mode_count_exact,
    recover_conjugated_moment,
    solve_pf_altmin,
    swap_transform,
)

__version__ = "0.1.0"
