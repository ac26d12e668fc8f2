"""Minimum-time mission cost and its two risk-aware variants.

The nominal cost of a trajectory is a time cost gated off once the goal disc
has been entered, a distance-to-goal term accrued at every stage, and a
time-to-go estimate for rollouts that end short of the goal.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import DEFAULT_LIMITS, ControlLimits, State, Trajectory, rollout
from .traction import GridGeometry, TractionRealizationMap, right_cvar_empirical


@dataclass(frozen=True)
class ObjectiveConfig:
    goal: tuple[float, float]
    goal_radius: float = 0.5
    default_speed: float = 3.0
    dist_weight: float = 0.02
    dt: float = 0.1
    time_limit: float = 15.0

    def __post_init__(self) -> None:
        if not self.goal_radius > 0:
            raise ValueError("goal_radius must be positive")
        if not self.default_speed > 0:
            raise ValueError("default_speed must be positive")
        if self.dist_weight < 0:
            raise ValueError("dist_weight must be non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "goal", (float(self.goal[0]), float(self.goal[1])))


class CostMode(str, enum.Enum):
    NOMINAL = "nominal"
    EXPECTED = "expected"
    CVAR_DYN = "cvar-dyn"
    CVAR_COST = "cvar-cost"


@dataclass(frozen=True)
class RiskConfig:
    """Cost mode and risk level.

    ``nominal_traction`` is the traction assumed on known cells by the
    NOMINAL mode; 1.0 means no slip.
    """

    mode: CostMode = CostMode.CVAR_DYN
    alpha: float = 1.0
    map_samples: int = 1024
    nominal_traction: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", CostMode(self.mode))
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"invalid risk level: alpha={self.alpha!r}")
        if self.mode is CostMode.CVAR_COST and self.map_samples < 1:
            raise ValueError("map_samples must be >= 1 for cvar-cost")
        if not (0.0 <= self.nominal_traction <= 1.0):
            raise ValueError("nominal_traction must lie in [0, 1]")

    @property
    def effective_alpha(self) -> float:
        return 1.0 if self.mode is CostMode.EXPECTED else self.alpha


@dataclass(frozen=True)
class PenaltyField:
    """Non-negative auxiliary stage cost per cell."""

    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64)
        if v.shape != self.geometry.shape:
            raise ValueError("penalty grid does not match the geometry")
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            raise ValueError("penalties must be finite and non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, geometry: GridGeometry) -> PenaltyField:
        return cls(geometry, np.zeros(geometry.shape))

    @classmethod
    def from_mask(cls, geometry: GridGeometry, mask: np.ndarray, weight: float) -> PenaltyField:
        return cls(geometry, np.where(mask, float(weight), 0.0))

    def __add__(self, other: PenaltyField) -> PenaltyField:
        return PenaltyField(self.geometry, self.values + other.values)

    def at(self, x: float, y: float) -> float:
        cell = self.geometry.cell_of(x, y)
        return 0.0 if cell is None else float(self.values[cell])


def done_index(traj: Trajectory, cfg: ObjectiveConfig) -> int | None:
    """First step whose position lies inside the goal disc, or None."""
    d = np.hypot(cfg.goal[0] - traj.states[:, 0], cfg.goal[1] - traj.states[:, 1])
    hits = np.flatnonzero(d <= cfg.goal_radius)
    return int(hits[0]) if hits.size else None


def nominal_cost(traj: Trajectory, cfg: ObjectiveConfig) -> float:
    gx, gy = cfg.goal
    done_at = done_index(traj, cfg)
    horizon = traj.horizon
    cost = 0.0
    for t in range(horizon):
        x, y = traj.states[t, 0], traj.states[t, 1]
        d = math.sqrt((gx - x) ** 2 + (gy - y) ** 2)
        if done_at is None or t < done_at:
            cost += cfg.dt
        cost += cfg.dist_weight * d
    if done_at is None:
        x, y = traj.states[horizon, 0], traj.states[horizon, 1]
        cost += math.sqrt((gx - x) ** 2 + (gy - y) ** 2) / cfg.default_speed
    return cost


def penalty_line_cost(traj: Trajectory, penalties: PenaltyField) -> float:
    """Sum of the penalty at every stage state ``x_0 .. x_{T-1}``."""
    return float(sum(penalties.at(x, y) for x, y, _ in traj.states[:-1]))


def _cost_on_map(
    controls, initial: State, realization: TractionRealizationMap, cfg, penalties, limits
) -> float:
    traj = rollout(initial, controls, lambda s: realization.lookup(s.x, s.y), cfg.dt, limits)
    cost = nominal_cost(traj, cfg)
    if penalties is not None:
        cost += penalty_line_cost(traj, penalties)
    return cost


def cvar_cost(
    controls: np.ndarray,
    initial: State,
    realizations: Sequence[TractionRealizationMap],
    cfg: ObjectiveConfig,
    risk: RiskConfig,
    penalties: PenaltyField | None = None,
    limits: ControlLimits = DEFAULT_LIMITS,
) -> float:
    """Right-tail CVaR of the mission cost over sampled traction maps."""
    if len(realizations) == 0:
        raise ValueError("no traction realizations")
    costs = [_cost_on_map(controls, initial, r, cfg, penalties, limits) for r in realizations]
    return right_cvar_empirical(costs, risk.alpha)


def cvar_dyn_cost(
    controls: np.ndarray,
    initial: State,
    cvar_map: TractionRealizationMap,
    cfg: ObjectiveConfig,
    penalties: PenaltyField | None = None,
    limits: ControlLimits = DEFAULT_LIMITS,
) -> float:
    """Mission cost of a single rollout on the worst-case expected traction map."""
    return _cost_on_map(controls, initial, cvar_map, cfg, penalties, limits)
