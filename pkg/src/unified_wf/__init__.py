"""Interference-aware, QoS-constrained water-filling for heterogeneous MU-MIMO downlinks."""

from .allocation import Allocation, interference_update
from .baselines import equal_power, traditional_wf
from .errors import DegenerateScenarioError, NoFeasibleMuError, ScenarioInfeasibleError, UnifiedWFError
from .metrics import (capacity, detection_probability, evaluate, jrc_utility, objective,
                      qos_satisfaction, scnr)
from .scenario import (Scenario, Service, UserChannel, UserClass, class_split, generate_channel,
                       make_scenario, snr_to_noise)
from .solver import (DualState, SolveReport, SolverConfig, kkt_residual, lagrangian,
                     lagrangian_gradient, power_update_comm, power_update_jrc, power_update_sense,
                     solve, solve_mu, subgradient_update)
from .sweep import (ScenarioTemplate, SweepConfig, SweepResult, SweepRow, emit_csv, emit_plot,
                    parse_csv, run_sweep, summarize)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "interference_update",
    "equal_power",
    "traditional_wf",
    "DegenerateScenarioError",
    "NoFeasibleMuError",
    "ScenarioInfeasibleError",
    "UnifiedWFError",
    "capacity",
    "detection_probability",
    "evaluate",
    "jrc_utility",
    "objective",
    "qos_satisfaction",
    "scnr",
    "Scenario",
    "Service",
    "UserChannel",
    "UserClass",
    "class_split",
    "generate_channel",
    "make_scenario",
    "snr_to_noise",
    "DualState",
    "SolveReport",
    "SolverConfig",
    "kkt_residual",
    "lagrangian",
    "lagrangian_gradient",
    "power_update_comm",
    "power_update_jrc",
    "power_update_sense",
    "solve",
    "solve_mu",
    "subgradient_update",
    "ScenarioTemplate",
    "SweepConfig",
    "SweepResult",
    "SweepRow",
    "emit_csv",
    "emit_plot",
    "parse_csv",
    "run_sweep",
    "summarize",
]
