"""Risk-aware MPPI planning over categorical traction distributions."""

from __future__ import annotations

from .dynamics import Control, ControlLimits, State, Trajectory, rollout, step
from .mppi import MppiConfig, MppiPlanner, PlanningModel
from .objective import CostMode, ObjectiveConfig, PenaltyField, RiskConfig, cvar_cost, cvar_dyn_cost, nominal_cost
from .ood import OodDetector, fit as fit_detector
from .traction import (
    CategoricalDistribution,
    GridGeometry,
    TractionDistributionMap,
    TractionRealizationMap,
    cvar_traction_map,
    left_cvar,
    left_var,
    right_cvar,
    right_cvar_empirical,
    sample_realization,
)

__all__ = [
    "CategoricalDistribution",
    "Control",
    "ControlLimits",
    "CostMode",
    "GridGeometry",
    "MppiConfig",
    "MppiPlanner",
    "ObjectiveConfig",
    "OodDetector",
    "PenaltyField",
    "PlanningModel",
    "RiskConfig",
    "State",
    "TractionDistributionMap",
    "TractionRealizationMap",
    "Trajectory",
    "cvar_cost",
    "cvar_dyn_cost",
    "cvar_traction_map",
    "fit_detector",
    "left_cvar",
    "left_var",
    "nominal_cost",
    "right_cvar",
    "right_cvar_empirical",
    "rollout",
    "sample_realization",
    "step",
]
