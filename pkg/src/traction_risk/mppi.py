"""Sampling-based receding-horizon optimizer (MPPI) over risk-aware costs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import Control, ControlLimits, State
from .objective import CostMode, ObjectiveConfig, PenaltyField, RiskConfig
from .traction import (
    TractionDistributionMap,
    TractionRealizationMap,
    cvar_traction_map,
    nominal_traction_map,
    right_cvar_rows,
    sample_realizations,
)


@dataclass(frozen=True)
class MppiConfig:
    horizon: int = 100
    dt: float = 0.1
    rollout_count: int = 1024
    noise_sigma: tuple[float, float] = (2.0, 2.0)
    limits: ControlLimits = field(default_factory=ControlLimits)
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.horizon < 1 or self.rollout_count < 1:
            raise ValueError("horizon and rollout_count must be >= 1")
        if min(self.noise_sigma) <= 0:
            raise ValueError("noise_sigma must be positive")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "noise_sigma", tuple(float(s) for s in self.noise_sigma))


def draw_noise(cfg: MppiConfig, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean Gaussian control noise of shape ``(N, T, 2)``."""
    return rng.standard_normal((cfg.rollout_count, cfg.horizon, 2)) * np.asarray(cfg.noise_sigma)


def perturb(nominal: np.ndarray, cfg: MppiConfig, rng: np.random.Generator) -> np.ndarray:
    """``nominal`` plus Gaussian noise, not clamped; candidate 0 is the nominal."""
    noise = draw_noise(cfg, rng)
    noise[0] = 0.0
    return nominal[None] + noise


def sample_perturbations(
    nominal: np.ndarray, cfg: MppiConfig, rng: np.random.Generator
) -> np.ndarray:
    """Perturbed copies of ``nominal``, clamped to the limits.

    Candidate 0 is the unperturbed nominal sequence.
    """
    return cfg.limits.clamp_array(perturb(nominal, cfg, rng))


def softmin_weights(costs: np.ndarray, temperature: float) -> np.ndarray:
    costs = np.where(np.isnan(costs), np.inf, np.asarray(costs, dtype=np.float64))
    finite = np.isfinite(costs)
    if not finite.any():
        raise ValueError("no viable rollout: every candidate cost is infinite")
    w = np.zeros_like(costs)
    w[finite] = np.exp(-(costs[finite] - costs[finite].min()) / temperature)
    return w / w.sum()


def mppi_update(
    candidates: np.ndarray,
    costs: np.ndarray,
    temperature: float,
    limits: ControlLimits,
) -> tuple[np.ndarray, np.ndarray]:
    """Softmin-weighted combination of candidate sequences; returns (sequence, weights)."""
    if len(candidates) != len(costs) or len(costs) < 1:
        raise ValueError("need one cost per candidate and at least one candidate")
    weights = softmin_weights(costs, temperature)
    seq = np.tensordot(weights, candidates, axes=1)
    return limits.clamp_array(seq), weights


class PlanningModel:
    """What the planner knows about the world: the distribution map, the
    objective, the cost mode and optional auxiliary penalties.

    Ground-truth traction is never given to this object.
    """

    def __init__(
        self,
        dist_map: TractionDistributionMap,
        objective: ObjectiveConfig,
        risk: RiskConfig,
        penalties: PenaltyField | None = None,
        limits: ControlLimits | None = None,
    ) -> None:
        self.dist_map = dist_map
        self.objective = objective
        self.risk = risk
        self.penalties = penalties
        self.limits = limits or ControlLimits()
        geo = dist_map.geometry
        self.params = np.array(
            [
                geo.origin[0], geo.origin[1], geo.cell_size, objective.dt,
                objective.goal[0], objective.goal[1], objective.goal_radius,
                objective.default_speed, objective.dist_weight,
                self.limits.v_max, self.limits.omega_max,
            ],
            dtype=np.float64,
        )
        self._penalty = (
            np.zeros((1, 1)) if penalties is None else np.ascontiguousarray(penalties.values)
        )
        self.fixed_map: TractionRealizationMap | None = None
        if risk.mode is CostMode.NOMINAL:
            self.fixed_map = nominal_traction_map(dist_map, risk.nominal_traction)
        elif risk.mode in (CostMode.EXPECTED, CostMode.CVAR_DYN):
            self.fixed_map = cvar_traction_map(dist_map, risk.effective_alpha)

    def rollout_costs(self, candidates: np.ndarray, x0: State, lin: np.ndarray, ang: np.ndarray):
        """Raw ``(N, M)`` costs of candidates over stacked traction maps."""
        return _kernels.batch_costs(
            np.asarray(x0, dtype=np.float64),
            np.ascontiguousarray(candidates, dtype=np.float64),
            np.ascontiguousarray(lin),
            np.ascontiguousarray(ang),
            self._penalty,
            self.penalties is not None,
            self.params,
        )

    def sample_maps(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        if self.fixed_map is not None:
            return self.fixed_map.linear[None], self.fixed_map.angular[None]
        return sample_realizations(self.dist_map, rng, self.risk.map_samples)

    def candidate_costs(
        self, candidates: np.ndarray, x0: State, rng: np.random.Generator
    ) -> np.ndarray:
        lin, ang = self.sample_maps(rng)
        costs = self.rollout_costs(candidates, x0, lin, ang)
        if self.risk.mode is CostMode.CVAR_COST:
            return right_cvar_rows(costs, self.risk.alpha)
        return costs[:, 0]

    def predicted_states(self, controls: np.ndarray, x0: State) -> np.ndarray:
        """Rollout of one sequence on the model's fixed map (mean map for CVaR-Cost)."""
        tmap = self.fixed_map or cvar_traction_map(self.dist_map, 1.0)
        return _kernels.batch_states(
            np.asarray(x0, dtype=np.float64),
            np.ascontiguousarray(controls[None], dtype=np.float64),
            np.ascontiguousarray(tmap.linear),
            np.ascontiguousarray(tmap.angular),
            self.params,
        )[0]


class MppiPlanner:
    """Receding-horizon MPPI with a warm-started nominal control sequence.

    Per-cycle random streams are derived from ``(seed, iteration)``, so an
    episode is reproducible from the seed alone.
    """

    def __init__(
        self,
        cfg: MppiConfig,
        model: PlanningModel,
        initial_sequence: np.ndarray | None = None,
    ) -> None:
        self.cfg = cfg
        self.model = model
        if initial_sequence is None:
            initial_sequence = np.zeros((cfg.horizon, 2))
        self.nominal = cfg.limits.clamp_array(np.array(initial_sequence, dtype=np.float64))
        if self.nominal.shape != (cfg.horizon, 2):
            raise ValueError("initial sequence must have shape (horizon, 2)")
        self.iteration = 0

    def cycle_rngs(self) -> tuple[np.random.Generator, np.random.Generator]:
        seq = np.random.SeedSequence(self.cfg.seed, spawn_key=(self.iteration,))
        noise_seq, map_seq = seq.spawn(2)
        return np.random.default_rng(noise_seq), np.random.default_rng(map_seq)

    def optimize(self, state: State) -> tuple[np.ndarray, dict]:
        """One MPPI iteration from ``state``; returns the updated sequence."""
        noise_rng, map_rng = self.cycle_rngs()
        # rollouts clamp controls, so raw and clamped candidates cost the same;
        # averaging the raw ones keeps a saturated nominal at the limit
        candidates = perturb(self.nominal, self.cfg, noise_rng)
        costs = self.model.candidate_costs(candidates, state, map_rng)
        seq, weights = mppi_update(candidates, costs, self.cfg.temperature, self.cfg.limits)
        nz = weights[weights > 0]
        diagnostics = {
            "iteration": self.iteration,
            "best_cost": float(np.min(costs)),
            "nominal_cost": float(costs[0]),
            "weight_entropy": float(-(nz * np.log(nz)).sum()),
            "effective_sample_size": float(1.0 / np.sum(weights**2)),
        }
        return seq, diagnostics

    def plan_step(self, state: State, shift: int = 1) -> tuple[Control, dict]:
        """Optimize, return the first control and shift the warm start by ``shift``."""
        seq, diagnostics = self.optimize(state)
        control = Control(float(seq[0, 0]), float(seq[0, 1]))
        shift = min(max(shift, 1), self.cfg.horizon)
        self.nominal = np.concatenate([seq[shift:], np.repeat(seq[-1:], shift, axis=0)])
        self.iteration += 1
        diagnostics["control"] = [control.v, control.omega]
        return control, diagnostics

