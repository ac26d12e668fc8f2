from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from traction_risk.dynamics import ControlLimits, State, rollout, step
from traction_risk.mppi import (
    MppiConfig,
    MppiPlanner,
    PlanningModel,
    draw_noise,
    mppi_update,
    sample_perturbations,
    softmin_weights,
)
from traction_risk.objective import (
    CostMode,
    ObjectiveConfig,
    PenaltyField,
    RiskConfig,
    nominal_cost,
    penalty_line_cost,
)
from traction_risk.traction import (
    CategoricalDistribution,
    GridGeometry,
    TractionDistributionMap,
    cvar_traction_map,
    right_cvar_empirical,
    sample_realizations,
)

LIMITS = ControlLimits()


def random_map(geo: GridGeometry, seed: int) -> TractionDistributionMap:
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.full(20, 0.3), size=geo.shape)
    return TractionDistributionMap(geo, p, p[:, ::-1])


def python_cost(controls, x0, lin, ang, geo, obj, penalties=None) -> float:
    """Reference cost: pure-Python rollout plus the objective functions."""

    def lookup(s):
        cell = geo.cell_of(s.x, s.y)
        return (0.0, 0.0) if cell is None else (lin[cell], ang[cell])

    traj = rollout(x0, controls, lookup, obj.dt)
    cost = nominal_cost(traj, obj)
    if penalties is not None:
        cost += penalty_line_cost(traj, penalties)
    return cost


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [{"horizon": 0}, {"rollout_count": 0}, {"noise_sigma": (0.0, 1.0)}, {"temperature": 0.0}, {"dt": 0.0}],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            MppiConfig(**kw)


class TestSampling:
    def test_tiny_sigma_gives_nominal(self):
        cfg = MppiConfig(rollout_count=32, noise_sigma=(1e-12, 1e-12))
        nominal = np.tile([1.0, -0.5], (100, 1))
        cand = sample_perturbations(nominal, cfg, np.random.default_rng(0))
        assert np.allclose(cand, nominal[None], atol=1e-9)

    def test_noise_statistics(self):
        cfg = MppiConfig(rollout_count=1024)
        noise = draw_noise(cfg, np.random.default_rng(1))
        assert noise.shape == (1024, 100, 2)
        assert abs(noise[..., 0].mean()) < 0.2
        assert abs(noise[..., 0].std() - 2.0) < 0.15

    def test_candidate_zero_is_nominal_and_all_clamped(self):
        cfg = MppiConfig(rollout_count=64, horizon=20)
        nominal = np.tile([2.9, 3.0], (20, 1))
        cand = sample_perturbations(nominal, cfg, np.random.default_rng(2))
        assert np.array_equal(cand[0], LIMITS.clamp_array(nominal))
        assert np.all(np.abs(cand[..., 0]) <= 3.0) and np.all(np.abs(cand[..., 1]) <= math.pi)

    def test_deterministic(self):
        cfg = MppiConfig(rollout_count=16, horizon=10)
        nominal = np.zeros((10, 2))
        a = sample_perturbations(nominal, cfg, np.random.default_rng(3))
        b = sample_perturbations(nominal, cfg, np.random.default_rng(3))
        assert np.array_equal(a, b)


class TestUpdate:
    def test_single_candidate_unchanged(self):
        c = np.random.default_rng(0).uniform(-1, 1, (1, 10, 2))
        seq, w = mppi_update(c, np.array([5.0]), 1.0, LIMITS)
        assert np.array_equal(seq, c[0]) and w.tolist() == [1.0]

    def test_equal_costs_average(self):
        c = np.random.default_rng(1).uniform(-1, 1, (2, 10, 2))
        seq, _ = mppi_update(c, np.array([3.0, 3.0]), 1.0, LIMITS)
        assert np.allclose(seq, c.mean(axis=0))

    def test_large_cost_gap(self):
        c = np.random.default_rng(2).uniform(-1, 1, (2, 10, 2))
        seq, w = mppi_update(c, np.array([0.0, 100.0]), 1.0, LIMITS)
        assert w[1] == pytest.approx(math.exp(-100), rel=1e-6)
        assert np.allclose(seq, c[0], atol=1e-6)

    def test_penalty_of_a_million_zeroes_the_weight(self):
        w = softmin_weights(np.array([12.0, 12.0 + 1e6]), 1.0)
        assert w[1] == 0.0

    def test_no_viable_rollout(self):
        with pytest.raises(ValueError, match="no viable rollout"):
            mppi_update(np.zeros((2, 3, 2)), np.array([np.inf, np.inf]), 1.0, LIMITS)

    def test_infinite_costs_get_zero_weight(self):
        w = softmin_weights(np.array([1.0, np.inf, np.nan, 2.0]), 1.0)
        assert w[1] == w[2] == 0.0 and w.sum() == pytest.approx(1.0)

    @given(st.integers(1, 40), st.integers(0, 2**32 - 1), st.floats(0.01, 100))
    def test_weights_normalized_and_limits_respected(self, n, seed, lam):
        rng = np.random.default_rng(seed)
        cand = rng.uniform(-10, 10, (n, 5, 2))
        costs = rng.uniform(0, 1000, n)
        seq, w = mppi_update(cand, costs, lam, LIMITS)
        assert abs(w.sum() - 1.0) < 1e-9 and np.all(w >= 0)
        assert np.all(np.abs(seq[:, 0]) <= 3.0) and np.all(np.abs(seq[:, 1]) <= math.pi)


class TestKernelCosts:
    GEO = GridGeometry(12, 12, 1.0, (-1.0, -2.0))
    OBJ = ObjectiveConfig(goal=(8.0, 5.0), goal_radius=0.5, dist_weight=0.03)

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_python_reference(self, seed):
        rng = np.random.default_rng(seed)
        dmap = random_map(self.GEO, seed)
        pen = PenaltyField(self.GEO, rng.uniform(0, 2, self.GEO.shape) * (rng.random(self.GEO.shape) < 0.3))
        model = PlanningModel(dmap, self.OBJ, RiskConfig(CostMode.CVAR_COST, 0.5, 8), pen)
        lin, ang = sample_realizations(dmap, rng, 8)
        cand = rng.uniform(-4, 4, (6, 60, 2))
        x0 = State(1.0, 4.0, 0.3)
        got = model.rollout_costs(cand, x0, lin, ang)
        for n in range(6):
            for m in range(8):
                want = python_cost(cand[n], x0, lin[m], ang[m], self.GEO, self.OBJ, pen)
                assert got[n, m] == pytest.approx(want, abs=1e-9)

    def test_cvar_cost_is_right_tail_of_per_map_costs(self):
        dmap = random_map(self.GEO, 7)
        model = PlanningModel(dmap, self.OBJ, RiskConfig(CostMode.CVAR_COST, 0.3, 10))
        cand = np.random.default_rng(0).uniform(-3, 3, (5, 40, 2))
        x0 = State(0.0, 3.0, 0.0)
        got = model.candidate_costs(cand, x0, np.random.default_rng(11))
        lin, ang = model.sample_maps(np.random.default_rng(11))
        per_map = model.rollout_costs(cand, x0, lin, ang)
        assert np.allclose(got, [right_cvar_empirical(r, 0.3) for r in per_map])

    def test_cvar_dyn_uses_cvar_map(self):
        dmap = random_map(self.GEO, 8)
        model = PlanningModel(dmap, self.OBJ, RiskConfig(CostMode.CVAR_DYN, 0.4))
        cand = np.random.default_rng(1).uniform(-3, 3, (4, 40, 2))
        x0 = State(0.0, 3.0, 0.0)
        cm = cvar_traction_map(dmap, 0.4)
        got = model.candidate_costs(cand, x0, np.random.default_rng(0))
        for n in range(4):
            want = python_cost(cand[n], x0, cm.linear, cm.angular, self.GEO, self.OBJ)
            assert got[n] == pytest.approx(want, abs=1e-9)

    @pytest.mark.parametrize("value", [0.3, 0.8, 1.0])
    def test_point_mass_modes_agree(self, value):
        dmap = TractionDistributionMap.uniform(self.GEO, CategoricalDistribution.point_mass(value))
        level = float(dmap.cell(0, 0)[0].mean())
        cand = np.random.default_rng(2).uniform(-3, 3, (20, 50, 2))
        x0 = State(2.0, 1.0, -0.5)
        modes = [
            RiskConfig(CostMode.NOMINAL, nominal_traction=level),
            RiskConfig(CostMode.EXPECTED),
            RiskConfig(CostMode.CVAR_DYN, 0.05),
            RiskConfig(CostMode.CVAR_COST, 0.5, 7),
        ]
        costs = [PlanningModel(dmap, self.OBJ, r).candidate_costs(cand, x0, np.random.default_rng(3)) for r in modes]
        for c in costs[1:]:
            assert np.allclose(c, costs[0], atol=1e-9, rtol=0)


def open_field(geo=GridGeometry(30, 30), traction: float = 0.99) -> TractionDistributionMap:
    return TractionDistributionMap.uniform(geo, CategoricalDistribution.point_mass(traction))


def closed_loop(model, truth, x0, steps, seed=0, rollouts=512):
    planner = MppiPlanner(MppiConfig(rollout_count=rollouts, seed=seed), model)
    states, controls = [x0], []
    for _ in range(steps):
        u, _ = planner.plan_step(states[-1])
        controls.append(u)
        states.append(step(states[-1], u, truth.lookup(states[-1].x, states[-1].y), 0.1))
    return np.array(states), controls


class TestPlanner:
    def test_initial_sequence_shape_checked(self):
        model = PlanningModel(open_field(), ObjectiveConfig(goal=(20, 15)), RiskConfig(CostMode.EXPECTED))
        with pytest.raises(ValueError):
            MppiPlanner(MppiConfig(horizon=10), model, np.zeros((5, 2)))

    def test_straight_goal_progress(self):
        dmap = open_field()
        model = PlanningModel(dmap, ObjectiveConfig(goal=(15.0, 15.0)), RiskConfig(CostMode.EXPECTED))
        states, _ = closed_loop(model, cvar_traction_map(dmap, 1.0), State(5.0, 15.0, 0.0), 20)
        assert states[-1, 0] - 5.0 >= 3.0

    @pytest.mark.parametrize("seed", [0, 1])
    def test_wall_with_side_gap(self, seed):
        geo = GridGeometry(30, 30)
        known = np.ones(geo.shape, dtype=bool)
        known[:, 14:16] = False
        known[18:22, 14:16] = True
        dmap = open_field(geo).with_known(known)
        model = PlanningModel(dmap, ObjectiveConfig(goal=(25.0, 15.0)), RiskConfig(CostMode.EXPECTED))
        states, _ = closed_loop(model, cvar_traction_map(dmap, 1.0), State(5.0, 15.0, 0.0), 120, seed)
        crossing = states[np.argmax(states[:, 0] >= 15.0)]
        assert states[:, 0].max() > 16.0
        assert 18.0 <= crossing[1] <= 22.0
        assert np.hypot(*(states[-1, :2] - [25.0, 15.0])) <= 1.0

    def test_same_seed_same_control(self):
        dmap = random_map(GridGeometry(20, 20), 4)
        model = PlanningModel(dmap, ObjectiveConfig(goal=(15.0, 10.0)), RiskConfig(CostMode.CVAR_COST, 0.5, 8))
        runs = [
            MppiPlanner(MppiConfig(rollout_count=64, seed=9), model).plan_step(State(2.0, 10.0, 0.0))
            for _ in range(2)
        ]
        assert runs[0][0] == runs[1][0]
        assert runs[0][1] == runs[1][1]

    def test_shift_pads_with_last_control(self):
        model = PlanningModel(open_field(), ObjectiveConfig(goal=(20, 15)), RiskConfig(CostMode.EXPECTED))
        planner = MppiPlanner(MppiConfig(rollout_count=32, horizon=10), model)
        seq, _ = planner.optimize(State(5, 15, 0))
        planner.plan_step(State(5, 15, 0))
        assert np.array_equal(planner.nominal[:-1], seq[1:])
        assert np.array_equal(planner.nominal[-1], seq[-1])
        assert planner.iteration == 1

    def test_diagnostics(self):
        model = PlanningModel(open_field(), ObjectiveConfig(goal=(20, 15)), RiskConfig(CostMode.EXPECTED))
        _, diag = MppiPlanner(MppiConfig(rollout_count=32), model).plan_step(State(5, 15, 0))
        assert {"iteration", "best_cost", "weight_entropy", "effective_sample_size", "control"} <= set(diag)
        assert 1.0 <= diag["effective_sample_size"] <= 32.0

    def test_one_step_improvement(self):
        geo = GridGeometry(20, 20)
        dmap = random_map(geo, 5)
        obj = ObjectiveConfig(goal=(16.0, 10.0))
        model = PlanningModel(dmap, obj, RiskConfig(CostMode.CVAR_DYN, 0.5))
        cm = cvar_traction_map(dmap, 0.5)
        improved = 0
        trials = 60
        for seed in range(trials):
            start = np.random.default_rng(seed).uniform(-1, 1, (100, 2))
            planner = MppiPlanner(MppiConfig(rollout_count=256, seed=seed), model, start)
            seq, _ = planner.optimize(State(3.0, 10.0, 0.0))
            x0 = State(3.0, 10.0, 0.0)
            before = python_cost(planner.nominal, x0, cm.linear, cm.angular, geo, obj)
            after = python_cost(seq, x0, cm.linear, cm.angular, geo, obj)
            improved += after <= before
        assert improved >= 0.8 * trials
