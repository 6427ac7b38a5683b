"""Anchor deployment for UWB-localised robots exploring unknown areas."""

from .dop import AnchorRecord, AnchorSet, Origin, best_subset, heatmap, pdop
from .errors import (
    AnchorDeployError,
    ConditioningError,
    ConvergenceError,
    CoverageGapError,
    DegenerateGeometryError,
    InfeasibleRegionError,
    ProtocolError,
    ScenarioError,
)
from .geometry import ExplorationPath, Point2
from .ganp import GaParams, GanpParams, PlacementPlan, optimize
from .maneuver import ManeuverPath, Strategy, plan_maneuver
from .multilateration import PositionEstimate, WlsProblem, solve_nonlinear, solve_wls
from .scenario import ExplorationScenario

__version__ = "0.1.0"

__all__ = [
    "AnchorDeployError",
    "AnchorRecord",
    "AnchorSet",
    "ConditioningError",
    "ConvergenceError",
    "CoverageGapError",
    "DegenerateGeometryError",
    "ExplorationPath",
    "ExplorationScenario",
    "GaParams",
    "GanpParams",
    "InfeasibleRegionError",
    "ManeuverPath",
    "Origin",
    "PlacementPlan",
    "Point2",
    "PositionEstimate",
    "ProtocolError",
    "ScenarioError",
    "Strategy",
    "WlsProblem",
    "best_subset",
    "heatmap",
    "optimize",
    "pdop",
    "plan_maneuver",
    "solve_nonlinear",
    "solve_wls",
]
