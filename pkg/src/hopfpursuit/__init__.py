"""Time-optimal collaborative pursuit guidance from the generalized Hopf formula."""
from .config import PNConfig, ScenarioConfig
from .hopf_solver import (HopfSolution, QuadratureGrid, SolverOptions, TerminalCost,
                          build_grid, build_terminal_cost, hopf_objective, hopf_value,
                          minimize_hopf)
from .lin_dynamics import (Aspect, CaptureSet, ConfigurationError, ConstantBound,
                           ControlBoundSchedule, ParabolicBound, SystemMatrices, TableBound,
                           build_capture_set, build_joint_system, build_single_system,
                           expm_joint, joint_linear_state, linear_state,
                           nonlinear_derivative)
from .reachability import (GameModel, ReachResult, UnionValue, convexity_check,
                           extract_controls, min_time_to_reach, union_value)

__all__ = [
    "Aspect", "CaptureSet", "ConfigurationError", "ConstantBound", "ControlBoundSchedule",
    "GameModel", "HopfSolution", "PNConfig", "ParabolicBound", "QuadratureGrid",
    "ReachResult", "ScenarioConfig", "SolverOptions", "SystemMatrices", "TableBound",
    "TerminalCost", "UnionValue", "build_capture_set", "build_grid", "build_joint_system",
    "build_single_system", "build_terminal_cost", "convexity_check", "expm_joint",
    "extract_controls", "hopf_objective", "hopf_value", "joint_linear_state",
    "linear_state", "min_time_to_reach", "minimize_hopf", "nonlinear_derivative",
    "union_value",
]
