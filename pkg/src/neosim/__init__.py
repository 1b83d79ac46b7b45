"""Multi-lane highway simulation of connected lane-change strategies.

Layers, bottom up: ``road`` (geometry and vehicle state), ``idm``
(car-following), ``mobil`` (local lane-change incentives), ``incident``
(jam detection and noisy broadcasts), ``neo`` (non-local incentives),
``engine`` (vectorized world evolution), ``experiments`` (scenario grids
and sweeps), ``config``/``cli`` (YAML + command line front ends).
"""

from .engine import (EMERGENCY_DECEL, IncidentSpec, ModelSpec, SimConfig,
                     SimResult, Simulation, SimulationError,
                     altruistic_mobil_model, human_model, neo_model)
from .experiments import (BUILTIN_SCENARIOS, CellStats, RunMetrics,
                          ScenarioConfig, SweepResult, aggregate,
                          builtin_scenario, run_scenario, sweep,
                          write_outputs)
from .idm import IdmParams, desired_gap, follow_eval, idm_accel
from .incident import (IncidentReport, NoiseSpec, build_report, detect_jam,
                       estimate_lane_speeds, perturb_report)
from .mobil import IncentiveBreakdown, MobilParams, mobil_decide
from .neo import NeoParams, neo_decide
from .road import (HighwaySegment, LaneNeighbors, NeighborSet, OffRamp,
                   VehicleState, World, gap, neighbors)

__version__ = "0.1.0"

__all__ = [
    "EMERGENCY_DECEL", "IncidentSpec", "ModelSpec", "SimConfig", "SimResult",
    "Simulation", "SimulationError", "altruistic_mobil_model", "human_model",
    "neo_model", "BUILTIN_SCENARIOS", "CellStats", "RunMetrics",
    "ScenarioConfig", "SweepResult", "aggregate", "builtin_scenario",
    "run_scenario", "sweep", "write_outputs", "IdmParams", "desired_gap",
    "follow_eval", "idm_accel", "IncidentReport", "NoiseSpec", "build_report",
    "detect_jam", "estimate_lane_speeds", "perturb_report",
    "IncentiveBreakdown", "MobilParams", "mobil_decide", "NeoParams",
    "neo_decide", "HighwaySegment", "LaneNeighbors", "NeighborSet", "OffRamp",
    "VehicleState", "World", "gap", "neighbors",
]
