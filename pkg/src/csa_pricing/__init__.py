"""Dynamic pricing of charging station alliances via a two-stage evolutionary game."""

from .domain import (Alliance, DrContract, EvRequest, GeoPoint, MarketConfig, Scenario, Station,
                     ThetaBelief, validate_scenario)
from .evo_game import SolverConfig, nis, solve_two_stage
from .payoff import PayoffModel, discretize_theta
from .scenario import GeneratorConfig, build_base_case, generate, load_scenario, save_scenario
from .travel import MatrixProvider, SyntheticProvider

__version__ = "0.1.0"

__all__ = [
    "Alliance", "DrContract", "EvRequest", "GeoPoint", "MarketConfig", "Scenario", "Station",
    "ThetaBelief", "validate_scenario", "SolverConfig", "nis", "solve_two_stage", "PayoffModel",
    "discretize_theta", "GeneratorConfig", "build_base_case", "generate", "load_scenario",
    "save_scenario", "MatrixProvider", "SyntheticProvider",
]
