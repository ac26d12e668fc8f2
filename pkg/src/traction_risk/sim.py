"""Simulated semantic environments, closed-loop trials and benchmark suites.

A trial freezes one ground-truth traction realization, then alternates MPPI
planning against the *predicted* distribution map with a true unicycle step
on the realization, until the goal disc is entered or time runs out.
"""

from __future__ import annotations

import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import ood
from .dynamics import State, Trajectory, step
from .mppi import MppiConfig, MppiPlanner, PlanningModel
from .objective import CostMode, ObjectiveConfig, PenaltyField, RiskConfig
from .traction import (
    CategoricalDistribution,
    GridGeometry,
    TractionDistributionMap,
    TractionRealizationMap,
    sample_realization,
)

OOD_HANDLING = ("none", "zero_traction", "penalty")


@dataclass(frozen=True)
class DistributionSpec:
    """Mixture of ``(weight, mean, std)`` normals, discretized on demand."""

    components: tuple[tuple[float, float, float], ...]

    def build(self, bin_count: int) -> CategoricalDistribution:
        return CategoricalDistribution.from_normal_mixture(self.components, bin_count)

    @classmethod
    def normal(cls, mean: float, std: float) -> DistributionSpec:
        return cls(((1.0, mean, std),))


@dataclass(frozen=True)
class FeatureModel:
    """Independent Gaussian noise per feature dimension around ``mean``.

    A fraction ``glitch_fraction`` of cells gets its noise scaled by
    ``glitch_scale``, standing in for corrupted perception descriptors.
    """

    mean: tuple[float, ...]
    std: tuple[float, ...]
    glitch_fraction: float = 0.0
    glitch_scale: float = 1.0

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        mean, std = np.asarray(self.mean), np.asarray(self.std)
        noise = std * rng.standard_normal((count, mean.size))
        glitch = rng.random(count) < self.glitch_fraction
        noise[glitch] *= self.glitch_scale
        return mean + noise


@dataclass(frozen=True)
class TerrainType:
    """A terrain class.

    ``linear``/``angular`` give the true traction distributions. ``predicted_as``
    names the terrain whose distributions the traction model predicts for this
    class (the class itself when None), which is how a terrain never seen in
    training is mispredicted.
    """

    name: str
    linear: DistributionSpec
    features: FeatureModel
    angular: DistributionSpec | None = None
    predicted_as: str | None = None


def default_palette(vegetation_low: tuple[float, float] = (0.15, 0.05)) -> dict[str, TerrainType]:
    """Dirt, bimodal vegetation and an unseen "alien" terrain.

    ``vegetation_low`` is the (mean, std) of the slippery vegetation mode.
    """
    return {
        "dirt": TerrainType(
            "dirt",
            DistributionSpec.normal(0.8, 0.05),
            FeatureModel((1.0, 0.0, 0.0, 0.0), (0.1, 0.1, 0.3, 0.1), 0.005, 20.0),
        ),
        "vegetation": TerrainType(
            "vegetation",
            DistributionSpec(((0.5, *vegetation_low), (0.5, 0.85, 0.05))),
            FeatureModel((0.0, 1.0, 0.5, 0.0), (0.1, 0.1, 0.3, 0.1), 0.005, 20.0),
        ),
        "alien": TerrainType(
            "alien",
            DistributionSpec.normal(0.02, 0.02),
            FeatureModel((1.0, 0.0, 3.0, 0.0), (0.05, 0.05, 0.1, 0.05)),
            predicted_as="dirt",
        ),
    }


@dataclass(frozen=True)
class EnvironmentSpec:
    """Arena layout. Positions are in world meters; sizes in cells."""

    height: int = 50
    width: int = 50
    cell_size: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)
    start: tuple[float, float, float] = (14.0, 25.0, 0.0)
    goal: tuple[float, float] = (36.0, 25.0)
    vegetation_density: float = 0.0
    center_size: int = 8
    patch_size: int = 2
    placement_sigma: float = 2.0
    alien_regions: tuple[tuple[float, float, float, float], ...] = ()
    alien_patches: int = 0
    alien_patch_size: tuple[int, int] = (6, 8)  # (rows, cols)
    alien_sigma: float = 3.0
    unknown_regions: tuple[tuple[float, float, float, float], ...] = ()
    bin_count: int = 20
    palette: dict[str, TerrainType] = field(default_factory=default_palette, compare=False)

    def __post_init__(self) -> None:
        geo = self.geometry
        if not geo.contains(*self.start[:2]):
            raise ValueError("start lies outside the arena")
        if not geo.contains(*self.goal):
            raise ValueError("goal lies outside the arena")
        if not (0.0 <= self.vegetation_density <= 1.0):
            raise ValueError("vegetation_density must lie in [0, 1]")
        if self.alien_patches < 0 or min(self.alien_patch_size) < 1:
            raise ValueError("alien_patches must be >= 0 and alien_patch_size >= 1")
        if self.patch_size < 1 or self.center_size < 1:
            raise ValueError("patch_size and center_size must be >= 1")
        if "dirt" not in self.palette:
            raise ValueError("palette must define 'dirt'")

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(self.height, self.width, self.cell_size, self.origin)

    def center_slices(self) -> tuple[slice, slice]:
        size_r = min(self.center_size, self.height)
        size_c = min(self.center_size, self.width)
        r0 = (self.height - size_r) // 2
        c0 = (self.width - size_c) // 2
        return slice(r0, r0 + size_r), slice(c0, c0 + size_c)


@dataclass(frozen=True)
class Environment:
    spec: EnvironmentSpec
    terrain_names: tuple[str, ...]
    semantic: np.ndarray  # (H, W) index into terrain_names
    model_map: TractionDistributionMap  # what the planner is told
    truth_map: TractionDistributionMap  # what ground truth is drawn from
    features: ood.FeatureMap

    @property
    def geometry(self) -> GridGeometry:
        return self.model_map.geometry

    def terrain_mask(self, name: str) -> np.ndarray:
        if name not in self.terrain_names:
            return np.zeros(self.semantic.shape, dtype=bool)
        return self.semantic == self.terrain_names.index(name)

    def center_vegetation_fraction(self) -> float:
        rs, cs = self.spec.center_slices()
        return float(self.terrain_mask("vegetation")[rs, cs].mean())


def _region_mask(geo: GridGeometry, regions) -> np.ndarray:
    mask = np.zeros(geo.shape, dtype=bool)
    xs = geo.origin[0] + (np.arange(geo.width) + 0.5) * geo.cell_size
    ys = geo.origin[1] + (np.arange(geo.height) + 0.5) * geo.cell_size
    for x0, y0, x1, y1 in regions:
        cols = (xs >= min(x0, x1)) & (xs < max(x0, x1))
        rows = (ys >= min(y0, y1)) & (ys < max(y0, y1))
        mask |= rows[:, None] & cols[None, :]
    return mask


def _truncated_normal(rng: np.random.Generator, mean: float, std: float, lo: float, hi: float) -> float:
    for _ in range(10_000):
        v = rng.normal(mean, std)
        if lo <= v < hi:
            return float(v)
    return float(rng.uniform(lo, hi))


def place_vegetation(spec: EnvironmentSpec, rng: np.random.Generator) -> np.ndarray:
    """Boolean vegetation mask built from square patches.

    Patch centers follow a normal distribution around the arena middle,
    truncated to the arena, and patches are added until the vegetated
    fraction of the center region reaches the target density.
    """
    h, w = spec.height, spec.width
    veg = np.zeros((h, w), dtype=bool)
    if spec.vegetation_density <= 0:
        return veg
    rs, cs = spec.center_slices()
    center_cells = (rs.stop - rs.start) * (cs.stop - cs.start)
    target = math.ceil(spec.vegetation_density * center_cells - 1e-9)
    ps = spec.patch_size
    if ps > h or ps > w:
        raise ValueError("unreachable vegetation density: patches do not fit in the arena")
    mid_r, mid_c = h / 2.0, w / 2.0
    sigma = spec.placement_sigma / spec.cell_size
    max_attempts = 500 * h * w
    for _ in range(max_attempts):
        if veg[rs, cs].sum() >= target:
            return veg
        cr = _truncated_normal(rng, mid_r, sigma, 0.0, float(h))
        cc = _truncated_normal(rng, mid_c, sigma, 0.0, float(w))
        r0 = min(max(int(math.floor(cr - ps / 2.0 + 0.5)), 0), h - ps)
        c0 = min(max(int(math.floor(cc - ps / 2.0 + 0.5)), 0), w - ps)
        veg[r0:r0 + ps, c0:c0 + ps] = True
    raise ValueError(
        f"unreachable vegetation density {spec.vegetation_density}: "
        f"target not met after {max_attempts} patches"
    )


def place_alien(spec: EnvironmentSpec, rng: np.random.Generator) -> np.ndarray:
    """Fixed alien regions plus randomly centered rectangular alien patches."""
    geo = spec.geometry
    mask = _region_mask(geo, spec.alien_regions)
    ph, pw = min(spec.alien_patch_size[0], geo.height), min(spec.alien_patch_size[1], geo.width)
    sigma = spec.alien_sigma / spec.cell_size
    for _ in range(spec.alien_patches):
        cr = _truncated_normal(rng, geo.height / 2.0, sigma, 0.0, float(geo.height))
        cc = _truncated_normal(rng, geo.width / 2.0, sigma, 0.0, float(geo.width))
        r0 = min(max(int(math.floor(cr - ph / 2.0 + 0.5)), 0), geo.height - ph)
        c0 = min(max(int(math.floor(cc - pw / 2.0 + 0.5)), 0), geo.width - pw)
        mask[r0:r0 + ph, c0:c0 + pw] = True
    return mask


def generate_environment(spec: EnvironmentSpec, rng: np.random.Generator) -> Environment:
    """Semantic grid, predicted distribution map, true distribution map and features."""
    geo = spec.geometry
    names = tuple(spec.palette)
    semantic = np.full(geo.shape, names.index("dirt"), dtype=np.int64)
    veg = place_vegetation(spec, rng)
    if veg.any():
        if "vegetation" not in spec.palette:
            raise ValueError("palette must define 'vegetation' for a non-zero density")
        semantic[veg] = names.index("vegetation")
    if spec.alien_regions or spec.alien_patches:
        if "alien" not in spec.palette:
            raise ValueError("palette must define 'alien' to place alien terrain")
        semantic[place_alien(spec, rng)] = names.index("alien")
    known = ~_region_mask(geo, spec.unknown_regions)

    b = spec.bin_count
    true_lin, true_ang = {}, {}
    for name, terrain in spec.palette.items():
        true_lin[name] = terrain.linear.build(b).probs
        true_ang[name] = (terrain.angular or terrain.linear).build(b).probs

    def grids(table_lin, table_ang, lookup):
        lin = np.empty(geo.shape + (b,))
        ang = np.empty(geo.shape + (b,))
        for idx, name in enumerate(names):
            cells = semantic == idx
            lin[cells] = table_lin[lookup(name)]
            ang[cells] = table_ang[lookup(name)]
        return lin, ang

    truth = TractionDistributionMap(geo, *grids(true_lin, true_ang, lambda n: n), known)
    model = TractionDistributionMap(
        geo, *grids(true_lin, true_ang, lambda n: spec.palette[n].predicted_as or n), known
    )

    dim = len(spec.palette["dirt"].features.mean)
    feats = np.empty(geo.shape + (dim,))
    for idx, name in enumerate(names):
        cells = semantic == idx
        count = int(cells.sum())
        if count:
            feats[cells] = spec.palette[name].features.sample(rng, count)
    features = ood.FeatureMap(geo.height, geo.width, geo.cell_size, geo.origin, feats, known)
    return Environment(spec, names, semantic, model, truth, features)


def realize_ground_truth(env: Environment, rng: np.random.Generator) -> TractionRealizationMap:
    """One frozen traction draw from the true distributions."""
    return sample_realization(env.truth_map, rng)


@dataclass(frozen=True)
class Arm:
    """One planner configuration in a benchmark."""

    name: str
    risk: RiskConfig = field(default_factory=RiskConfig)
    mppi: MppiConfig = field(default_factory=MppiConfig)
    vegetation_penalty: float = 0.0
    ood_handling: str = "none"
    g_thres: float = 0.0
    ood_penalty: float = 1000.0

    def __post_init__(self) -> None:
        if self.ood_handling not in OOD_HANDLING:
            raise ValueError(f"ood_handling must be one of {OOD_HANDLING}")
        if self.vegetation_penalty < 0 or self.ood_penalty < 0:
            raise ValueError("penalties must be non-negative")

    def describe(self) -> dict:
        return {
            "arm": self.name,
            "mode": self.risk.mode.value,
            "alpha": self.risk.effective_alpha,
            "map_samples": self.risk.map_samples if self.risk.mode is CostMode.CVAR_COST else 0,
            "rollout_count": self.mppi.rollout_count,
            "vegetation_penalty": self.vegetation_penalty,
            "ood_handling": self.ood_handling,
            "g_thres": self.g_thres,
        }


@dataclass(frozen=True)
class SeedTuple:
    map: int
    realization: int
    planner: int


@dataclass
class TrialResult:
    success: bool
    time_to_goal: float | None
    trajectory: Trajectory
    seeds: SeedTuple
    arm: str = ""
    steps: int = 0
    failure_reason: str | None = None
    diagnostics: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        x, y, _ = self.trajectory.states[-1]
        return {
            "arm": self.arm,
            "success": self.success,
            "time_to_goal": self.time_to_goal,
            "steps": self.steps,
            "failure_reason": self.failure_reason,
            "final_x": float(x),
            "final_y": float(y),
            "map_seed": self.seeds.map,
            "realization_seed": self.seeds.realization,
            "planner_seed": self.seeds.planner,
        }


def build_planning_model(
    env: Environment,
    arm: Arm,
    objective: ObjectiveConfig,
    detector: ood.OodDetector | None = None,
) -> PlanningModel:
    """Planner world model for an arm; only predicted maps and masks go in."""
    dist_map = env.model_map
    penalty = np.zeros(env.geometry.shape)
    if arm.vegetation_penalty > 0:
        penalty += np.where(env.terrain_mask("vegetation"), arm.vegetation_penalty, 0.0)
    if arm.ood_handling != "none":
        if detector is None:
            raise ValueError(f"arm {arm.name!r} needs a fitted OOD detector")
        mask = ood.ood_mask(detector, env.features.features, arm.g_thres, dist_map.known)
        if arm.ood_handling == "zero_traction":
            dist_map = dist_map.with_known(dist_map.known & ~mask)
        else:
            penalty += np.where(mask, arm.ood_penalty, 0.0)
    penalties = PenaltyField(env.geometry, penalty) if penalty.any() else None
    return PlanningModel(dist_map, objective, arm.risk, penalties, arm.mppi.limits)


def run_trial(
    env: Environment,
    realization: TractionRealizationMap,
    arm: Arm,
    time_limit: float,
    control_rate: float | None = None,
    seeds: SeedTuple = SeedTuple(0, 0, 0),
    detector: ood.OodDetector | None = None,
    objective: ObjectiveConfig | None = None,
    record_diagnostics: bool = False,
) -> TrialResult:
    """Closed-loop episode: plan on the model, move on the ground truth."""
    dt = arm.mppi.dt
    if objective is None:
        objective = ObjectiveConfig(goal=env.spec.goal, dt=dt, time_limit=time_limit)
    else:
        objective = replace(objective, goal=env.spec.goal, dt=dt, time_limit=time_limit)
    period = dt if control_rate is None else 1.0 / control_rate
    substeps = max(1, int(round(period / dt)))
    if abs(substeps * dt - period) > 1e-9:
        raise ValueError("control period must be a whole multiple of the planner timestep")
    max_steps = int(math.floor(time_limit / dt + 1e-9))

    state = State(*map(float, env.spec.start))
    states = [state]
    diagnostics: list[dict] = []
    gx, gy = objective.goal

    def reached(s: State) -> bool:
        return math.hypot(s.x - gx, s.y - gy) <= objective.goal_radius

    def finish(success: bool, reason: str | None) -> TrialResult:
        n = len(states) - 1
        return TrialResult(
            success,
            round(n * dt, 10) if success else None,
            Trajectory(np.array(states), dt),
            seeds,
            arm.name,
            n,
            reason,
            diagnostics,
        )

    if reached(state):
        return finish(True, None)
    try:
        model = build_planning_model(env, arm, objective, detector)
        planner = MppiPlanner(replace(arm.mppi, seed=seeds.planner), model)
        while len(states) - 1 < max_steps:
            control, diag = planner.plan_step(state, shift=substeps)
            if record_diagnostics:
                diag["t"] = round((len(states) - 1) * dt, 10)
                diagnostics.append(diag)
            for _ in range(substeps):
                state = step(state, control, realization.lookup(state.x, state.y), dt, arm.mppi.limits)
                states.append(state)
                if reached(state):
                    return finish(True, None)
                if len(states) - 1 >= max_steps:
                    break
    except (ValueError, FloatingPointError) as exc:
        return finish(False, f"planner error: {exc}")
    return finish(False, "time limit")


def derive_seed(*key: int) -> int:
    """Stable 63-bit seed from an integer key path."""
    ss = np.random.SeedSequence(list(key))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def _density_key(density: float) -> int:
    # keyed by value, not position, so suites listing the same density share maps
    return int(round(density * 1_000_000))


@dataclass(frozen=True)
class BenchmarkSuite:
    """Every arm runs on the same maps and realizations at every density."""

    environment: EnvironmentSpec
    arms: tuple[Arm, ...]
    densities: tuple[float, ...] = (0.3, 0.5, 0.7)
    map_count: int = 20
    realizations_per_map: int = 5
    time_limit: float = 15.0
    control_rate: float | None = None
    seed: int = 0
    objective: ObjectiveConfig | None = None
    training_environment: EnvironmentSpec | None = None
    training_seed: int = 0
    detector_components: int = 2
    detector_pca: int = 2

    def __post_init__(self) -> None:
        if not self.arms:
            raise ValueError("benchmark suite needs at least one arm")
        if self.map_count < 1 or self.realizations_per_map < 1 or not self.densities:
            raise ValueError("map_count, realizations_per_map and densities must be >= 1")
        names = [a.name for a in self.arms]
        if len(set(names)) != len(names):
            raise ValueError("arm names must be unique")

    def needs_detector(self) -> bool:
        return any(a.ood_handling != "none" for a in self.arms)


@dataclass(frozen=True)
class TrialJob:
    density: float
    map_index: int
    realization_index: int
    seeds: SeedTuple


def trial_jobs(suite: BenchmarkSuite) -> list[TrialJob]:
    jobs = []
    for density in suite.densities:
        dk = _density_key(density)
        for mi in range(suite.map_count):
            map_seed = derive_seed(suite.seed, dk, mi)
            for ri in range(suite.realizations_per_map):
                seeds = SeedTuple(
                    map_seed,
                    derive_seed(suite.seed, dk, mi, ri, 1),
                    derive_seed(suite.seed, dk, mi, ri, 2),
                )
                jobs.append(TrialJob(density, mi, ri, seeds))
    return jobs


def training_environment(suite: BenchmarkSuite) -> EnvironmentSpec:
    return suite.training_environment or replace(
        suite.environment, alien_regions=(), alien_patches=0
    )


def fit_suite_detector(suite: BenchmarkSuite) -> ood.OodDetector | None:
    """Detector fit on a separate, alien-free training map; None if no arm needs one."""
    if not suite.needs_detector():
        return None
    env = generate_environment(training_environment(suite), np.random.default_rng(suite.training_seed))
    return ood.fit(
        env.features.known_features(),
        suite.detector_components,
        suite.detector_pca,
        seed=suite.training_seed,
    )


def build_trial(suite: BenchmarkSuite, job: TrialJob) -> tuple[Environment, TractionRealizationMap]:
    spec = replace(suite.environment, vegetation_density=job.density)
    env = generate_environment(spec, np.random.default_rng(job.seeds.map))
    return env, realize_ground_truth(env, np.random.default_rng(job.seeds.realization))


def replay_trial(
    suite: BenchmarkSuite,
    job: TrialJob,
    arm: Arm,
    detector: ood.OodDetector | None = None,
    record_diagnostics: bool = False,
) -> TrialResult:
    """Run (or re-run) one trial from its recorded seeds."""
    env, truth = build_trial(suite, job)
    return run_trial(
        env, truth, arm, suite.time_limit, suite.control_rate, job.seeds, detector,
        suite.objective, record_diagnostics,
    )


def trial_row(job: TrialJob, arm: Arm, result: TrialResult) -> dict:
    return {
        **arm.describe(),
        "density": job.density,
        "map_index": job.map_index,
        "realization_index": job.realization_index,
        **{k: v for k, v in result.summary().items() if k != "arm"},
    }


_WORKER: dict = {}


def _init_worker(suite: BenchmarkSuite, detector: ood.OodDetector | None, threads: int | None) -> None:
    if threads is not None:
        import numba

        numba.set_num_threads(threads)
    _WORKER["suite"] = suite
    _WORKER["detector"] = detector
    _WORKER["jobs"] = trial_jobs(suite)


def _run_task(task: tuple[int, int]) -> dict:
    job_index, arm_index = task
    suite = _WORKER["suite"]
    job = _WORKER["jobs"][job_index]
    arm = suite.arms[arm_index]
    return trial_row(job, arm, replay_trial(suite, job, arm, _WORKER["detector"]))


def run_trials(
    suite: BenchmarkSuite,
    parallelism: int = 1,
    detector: ood.OodDetector | None = None,
) -> list[dict]:
    """Per-trial rows ordered by (arm name, density, map, realization).

    Each trial depends only on its seed tuple, so rows are identical for
    any ``parallelism``.
    """
    if detector is None:
        detector = fit_suite_detector(suite)
    n_jobs = len(trial_jobs(suite))
    arm_order = sorted(range(len(suite.arms)), key=lambda i: suite.arms[i].name)
    tasks = [(j, a) for a in arm_order for j in range(n_jobs)]
    if parallelism <= 1:
        _init_worker(suite, detector, None)
        try:
            return [_run_task(t) for t in tasks]
        finally:
            _WORKER.clear()
    workers = min(parallelism, len(tasks))
    # spawn, not fork: the parent's OpenMP runtime does not survive a fork
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(
        workers, mp_context=ctx, initializer=_init_worker, initargs=(suite, detector, 1)
    ) as pool:
        return list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


AGGREGATE_KEYS = (
    "mode", "alpha", "map_samples", "rollout_count", "vegetation_penalty", "ood_handling", "g_thres",
)


def aggregate(rows: Sequence[dict]) -> list[dict]:
    """Success rate and time-to-goal statistics per (arm, density)."""
    groups: dict[tuple[str, float], list[dict]] = {}
    for row in rows:
        groups.setdefault((row["arm"], row["density"]), []).append(row)
    table = []
    for (arm, density), group in sorted(groups.items()):
        n = len(group)
        times = np.array(sorted(r["time_to_goal"] for r in group if r["success"]), dtype=np.float64)
        wins = len(times)
        lo, hi = wilson_interval(wins, n)
        table.append({
            "arm": arm,
            **{k: group[0][k] for k in AGGREGATE_KEYS},
            "density": density,
            "trials": n,
            "successes": wins,
            "success_rate": wins / n,
            "success_ci_low": lo,
            "success_ci_high": hi,
            "time_mean": float(times.mean()) if wins else None,
            "time_std": float(times.std(ddof=1)) if wins > 1 else None,
            "time_q25": float(np.percentile(times, 25)) if wins else None,
            "time_median": float(np.median(times)) if wins else None,
            "time_q75": float(np.percentile(times, 75)) if wins else None,
        })
    return table


def run_benchmark(suite: BenchmarkSuite, parallelism: int = 1) -> tuple[list[dict], list[dict]]:
    """Run every (arm, density, map, realization) trial; returns (rows, aggregate)."""
    rows = run_trials(suite, parallelism)
    return rows, aggregate(rows)


# Ready-made desk-scale scenarios.

def semantic_arms(
    rollout_count: int = 512,
    cvar_cost_rollouts: int = 256,
    cvar_cost_maps: int = 16,
) -> tuple[Arm, ...]:
    """No-slip, expected-traction, CVaR-Dyn(0.2) and CVaR-Cost(0.5) planners."""
    mppi = MppiConfig(rollout_count=rollout_count)
    return (
        Arm("nominal", RiskConfig(CostMode.NOMINAL), mppi),
        Arm("expected", RiskConfig(CostMode.EXPECTED), mppi),
        Arm("cvar-dyn-0.2", RiskConfig(CostMode.CVAR_DYN, 0.2), mppi),
        Arm(
            "cvar-cost-0.5",
            RiskConfig(CostMode.CVAR_COST, 0.5, cvar_cost_maps),
            MppiConfig(rollout_count=cvar_cost_rollouts),
        ),
    )


def semantic_environment(vegetation_low: tuple[float, float] = (0.02, 0.02)) -> EnvironmentSpec:
    """Vegetation blob between start and goal; slippery vegetation is nearly immobilizing."""
    return EnvironmentSpec(palette=default_palette(vegetation_low))


def semantic_suite(**overrides) -> BenchmarkSuite:
    return BenchmarkSuite(semantic_environment(), semantic_arms(), **overrides)


def alpha_sweep_suite(
    alphas: Sequence[float] = (1.0, 0.75, 0.5, 0.2),
    density: float = 0.7,
    rollout_count: int = 512,
    **overrides,
) -> BenchmarkSuite:
    mppi = MppiConfig(rollout_count=rollout_count)
    arms = tuple(Arm(f"cvar-dyn-{a:g}", RiskConfig(CostMode.CVAR_DYN, a), mppi) for a in alphas)
    return BenchmarkSuite(semantic_environment(), arms, densities=(density,), **overrides)


def ood_environment() -> EnvironmentSpec:
    """Open dirt field with one alien patch near the straight route."""
    return EnvironmentSpec(
        start=(10.0, 25.0, 0.0),
        goal=(40.0, 25.0),
        alien_patches=1,
        alien_patch_size=(6, 10),
        alien_sigma=3.0,
    )


def ood_suite(
    g_thresholds: Sequence[float] = (0.0, 0.75),
    handlings: Sequence[str] = ("zero_traction", "penalty"),
    rollout_count: int = 512,
    **overrides,
) -> BenchmarkSuite:
    """CVaR-Dyn(0.2) arms per (OOD handling, threshold) on the alien-patch field.

    The detector is trained on a mixed dirt/vegetation map without alien terrain.
    """
    risk = RiskConfig(CostMode.CVAR_DYN, 0.2)
    mppi = MppiConfig(rollout_count=rollout_count)
    arms = tuple(
        Arm(f"ood-{h}-{g:g}", risk, mppi, ood_handling=h, g_thres=g)
        for h in handlings
        for g in g_thresholds
    )
    env = ood_environment()
    train = replace(env, alien_patches=0, vegetation_density=0.5)
    params = dict(densities=(0.0,), time_limit=30.0, training_environment=train)
    params.update(overrides)
    return BenchmarkSuite(env, arms, **params)
