"""Age-of-information scheduling on a shared slotted channel.

Closed-form Whittle indices, exact MDP solvers, centralized policies, the
index-prioritized random access protocol and a seeded simulator.
"""
__version__ = "0.1.0"

from .model import ArrivalProcess, SystemState, TerminalState, aoi, slot_cost, step_terminal
from .whittle import (DecoupledParams, beta, check_indexability, optimal_cost, threshold,
                      thresholds, whittle)
from .mdp import (ConvergenceError, NonThresholdPolicyError, TruncationSpec, ValueTable,
                  extract_thresholds, flip_point, solve_decoupled, solve_joint)
from .policies import make_policy
from .sim import ConfigError, Scenario, SimReport, run, run_replications
from .ipra import IpraParams, contention_round, local_index, optimize_params, overhead_fraction

__all__ = [
    "ArrivalProcess", "SystemState", "TerminalState", "aoi", "slot_cost", "step_terminal",
    "DecoupledParams", "beta", "check_indexability", "optimal_cost", "threshold", "thresholds",
    "whittle", "ConvergenceError", "NonThresholdPolicyError", "TruncationSpec", "ValueTable",
    "extract_thresholds", "flip_point", "solve_decoupled", "solve_joint", "make_policy",
    "ConfigError", "Scenario", "SimReport", "run", "run_replications", "IpraParams",
    "contention_round", "local_index", "optimize_params", "overhead_fraction",
]
