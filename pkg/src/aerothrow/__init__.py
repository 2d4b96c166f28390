"""Aerial throwing: landing-constrained trajectory planning, disturbance-compensated
NMPC tracking, release-timing reassessment and a deterministic flight simulator."""

from .config import ScenarioConfig, bundled, load_scenario
from .errors import AerothrowError, InvalidConfigError, InvalidInputError, SimulationError
from .kernels import BACKEND
from .model import VehicleParams
from .nmpc import NmpcConfig, NmpcSolver
from .planner import PlannerConfig, PlanResult, optimize, release_window_duration
from .projectile import ReleaseState, landing_point
from .release import ReleaseDecision, nominal_trigger, reassess
from .sim import FlightResult, run_flight

__all__ = [
    "AerothrowError", "BACKEND", "FlightResult", "InvalidConfigError", "InvalidInputError", "NmpcConfig",
    "NmpcSolver", "PlanResult", "PlannerConfig", "ReleaseDecision", "ReleaseState", "ScenarioConfig",
    "SimulationError", "VehicleParams", "bundled", "landing_point", "load_scenario", "nominal_trigger",
    "optimize", "reassess", "release_window_duration", "run_flight",
]
__version__ = "0.1.0"
