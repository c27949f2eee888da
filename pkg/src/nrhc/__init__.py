"""Distributed real-time nonlinear receding horizon control for multi-agent consensus."""

from .costs import CostSpec, HorizonSchedule, horizon
from .dynamics import DynamicsModel, chen, get_model, linear, lorenz, lu_system
from .metrics import consensus_error, max_pairwise
from .scenarios import Scenario, ScenarioError, load_scenario, preset, preset_names, write_outputs
from .simulator import SimulationConfig, Simulator, TrajectoryLog, run
from .sweep import StabilizationConfig
from .topology import Topology
from .tpbvp import DivergenceError

__version__ = "0.1.0"

__all__ = [
    "CostSpec",
    "DivergenceError",
    "DynamicsModel",
    "HorizonSchedule",
    "Scenario",
    "ScenarioError",
    "SimulationConfig",
    "Simulator",
    "StabilizationConfig",
    "Topology",
    "TrajectoryLog",
    "chen",
    "consensus_error",
    "get_model",
    "horizon",
    "linear",
    "load_scenario",
    "lorenz",
    "lu_system",
    "max_pairwise",
    "preset",
    "preset_names",
    "run",
    "write_outputs",
]
