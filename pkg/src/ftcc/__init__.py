"""Distributed estimation and control of a jointly observable/controllable
LTI system over a strongly connected digraph, with finite-time exact average
consensus between estimation steps and token-passing gain design."""

from .consensus import (
    AverageResult,
    diameter_upper_bound,
    exact_average_fixed_rounds,
    finite_time_average,
    m_bar,
    ratio_step,
)
from .gains import (
    PlacementTargets,
    TokenResult,
    elect_leader,
    place_for_agent,
    place_single,
    run_token_protocol,
)
from .graph import Digraph, SyncFabric, is_strongly_connected, out_weight_matrix
from .linalg import (
    EigenPair,
    eigen_left,
    hankel_from_differences,
    is_schur_stable,
    kernel_vector,
    numerical_rank,
    pbh_controllable,
)
from .plant import LtiSystem, joint_rank_checks, local_indices, plant_step
from .runtime import (
    ClosedLoopTrace,
    InitializationResult,
    agreement_phase,
    estimate_and_control_step,
    initialize,
    run_closed_loop,
)
from .scenario import ScenarioConfig, load_scenario, save_scenario

__version__ = "0.1.0"

__all__ = [
    "AverageResult",
    "ClosedLoopTrace",
    "Digraph",
    "EigenPair",
    "InitializationResult",
    "LtiSystem",
    "PlacementTargets",
    "ScenarioConfig",
    "SyncFabric",
    "TokenResult",
    "agreement_phase",
    "diameter_upper_bound",
    "eigen_left",
    "elect_leader",
    "estimate_and_control_step",
    "exact_average_fixed_rounds",
    "finite_time_average",
    "hankel_from_differences",
    "initialize",
    "is_schur_stable",
    "is_strongly_connected",
    "joint_rank_checks",
    "kernel_vector",
    "load_scenario",
    "local_indices",
    "m_bar",
    "numerical_rank",
    "out_weight_matrix",
    "pbh_controllable",
    "place_for_agent",
    "place_single",
    "plant_step",
    "ratio_step",
    "run_closed_loop",
    "run_token_protocol",
    "save_scenario",
]
