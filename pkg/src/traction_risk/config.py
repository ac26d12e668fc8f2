"""Scenario configuration files.

A scenario is one YAML or JSON document::

    version: 1
    environment: {start: [14, 25, 0], goal: [36, 25], vegetation_density: 0.7}
    palette: {vegetation: {linear: [[0.5, 0.02, 0.02], [0.5, 0.85, 0.05]]}}
    objective: {goal_radius: 0.5}
    arms:
      - {name: cvar-dyn, mode: cvar-dyn, alpha: 0.2, rollout_count: 512}
    benchmark: {densities: [0.3, 0.5, 0.7], map_count: 20, realizations_per_map: 5}
    training: {seed: 0, environment: {vegetation_density: 0.5}}
    seeds: {seed: 0}

Every section except ``environment`` (which must name ``goal``) and ``arms``
is optional. Unknown keys are rejected by name, and :func:`resolve` fills in
every default so the resolved document fully describes the run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .dynamics import ControlLimits
from .mppi import MppiConfig
from .objective import CostMode, ObjectiveConfig, RiskConfig
from .sim import (
    OOD_HANDLING,
    Arm,
    BenchmarkSuite,
    DistributionSpec,
    EnvironmentSpec,
    FeatureModel,
    SeedTuple,
    TerrainType,
    default_palette,
    derive_seed,
)

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Malformed scenario; the message names the offending key."""


ENVIRONMENT_DEFAULTS: dict[str, Any] = {
    "height": 50,
    "width": 50,
    "cell_size": 1.0,
    "origin": [0.0, 0.0],
    "start": [14.0, 25.0, 0.0],
    "vegetation_density": 0.0,
    "center_size": 8,
    "patch_size": 2,
    "placement_sigma": 2.0,
    "alien_regions": [],
    "alien_patches": 0,
    "alien_patch_size": [6, 8],
    "alien_sigma": 3.0,
    "unknown_regions": [],
    "bin_count": 20,
}
ENVIRONMENT_REQUIRED = ("goal",)

OBJECTIVE_DEFAULTS: dict[str, Any] = {
    "goal_radius": 0.5,
    "default_speed": 3.0,
    "dist_weight": 0.02,
}

ARM_DEFAULTS: dict[str, Any] = {
    "mode": "cvar-dyn",
    "alpha": 1.0,
    "map_samples": 1024,
    "nominal_traction": 1.0,
    "rollout_count": 1024,
    "horizon": 100,
    "dt": 0.1,
    "noise_sigma": [2.0, 2.0],
    "temperature": 1.0,
    "v_max": 3.0,
    "omega_max": math.pi,
    "vegetation_penalty": 0.0,
    "ood_handling": "none",
    "g_thres": 0.0,
    "ood_penalty": 1000.0,
}
ARM_REQUIRED = ("name",)

BENCHMARK_DEFAULTS: dict[str, Any] = {
    "densities": [0.3, 0.5, 0.7],
    "map_count": 20,
    "realizations_per_map": 5,
    "time_limit": 15.0,
    "control_rate": None,
}

TRAINING_DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "components": 2,
    "pca": 2,
    "environment": {},
}

SEED_DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "map": None,
    "realization": None,
    "planner": None,
}

TERRAIN_KEYS = ("linear", "angular", "features", "predicted_as")
FEATURE_KEYS = ("mean", "std", "glitch_fraction", "glitch_scale")


def _section(raw: Any, where: str, defaults: dict, required: tuple[str, ...] = ()) -> dict:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping")
    for key in raw:
        if key not in defaults and key not in required:
            raise ConfigError(f"{where}: unknown key {key!r}")
    for key in required:
        if key not in raw:
            raise ConfigError(f"{where}: missing required key {key!r}")
    return {**defaults, **raw}


def load_document(path: str | Path) -> dict:
    """Parse a YAML or JSON scenario file without interpreting it."""
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot parse: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def resolve(doc: dict) -> dict:
    """Validate a raw document and return it with every default filled in."""
    known = ("version", "environment", "palette", "objective", "arms", "benchmark", "training", "seeds")
    for key in doc:
        if key not in known:
            raise ConfigError(f"unknown top-level key {key!r}")
    version = doc.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"version: unsupported config version {version!r}")
    if "environment" not in doc:
        raise ConfigError("missing required section 'environment' (with key 'goal')")
    arms = doc.get("arms")
    if not isinstance(arms, list) or not arms:
        raise ConfigError("arms: need a non-empty list of arms")
    training = _section(doc.get("training"), "training", TRAINING_DEFAULTS)
    # key check only: training overrides are applied on top of the main environment
    _section(training["environment"], "training.environment", {**ENVIRONMENT_DEFAULTS, "goal": None})
    palette = doc.get("palette") or {}
    if not isinstance(palette, dict):
        raise ConfigError("palette: expected a mapping of terrain names")
    for name, terrain in palette.items():
        where = f"palette.{name}"
        if not isinstance(terrain, dict):
            raise ConfigError(f"{where}: expected a mapping")
        for key in terrain:
            if key not in TERRAIN_KEYS:
                raise ConfigError(f"{where}: unknown key {key!r}")
        if "features" in terrain:
            for key in terrain["features"]:
                if key not in FEATURE_KEYS:
                    raise ConfigError(f"{where}.features: unknown key {key!r}")
    resolved = {
        "version": CONFIG_VERSION,
        "environment": _section(doc["environment"], "environment", ENVIRONMENT_DEFAULTS, ENVIRONMENT_REQUIRED),
        "palette": palette,
        "objective": _section(doc.get("objective"), "objective", OBJECTIVE_DEFAULTS),
        "arms": [_section(a, f"arms[{i}]", ARM_DEFAULTS, ARM_REQUIRED) for i, a in enumerate(arms)],
        "benchmark": _section(doc.get("benchmark"), "benchmark", BENCHMARK_DEFAULTS),
        "training": training,
        "seeds": _section(doc.get("seeds"), "seeds", SEED_DEFAULTS),
    }
    # build everything once so errors surface at load time
    Scenario.from_resolved(resolved)
    return resolved


def _tuple(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_tuple(v) for v in value)
    return value


def _mixture(value: Any, where: str) -> DistributionSpec:
    try:
        comps = tuple((float(w), float(m), float(s)) for w, m, s in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: expected a list of [weight, mean, std] triples") from exc
    if not comps:
        raise ConfigError(f"{where}: empty mixture")
    return DistributionSpec(comps)


def build_palette(overrides: dict) -> dict[str, TerrainType]:
    palette = default_palette()
    for name, entry in overrides.items():
        where = f"palette.{name}"
        base = palette.get(name)
        if base is None and ("linear" not in entry or "features" not in entry):
            raise ConfigError(f"{where}: a new terrain needs 'linear' and 'features'")
        linear = _mixture(entry["linear"], f"{where}.linear") if "linear" in entry else base.linear
        if "angular" in entry:
            angular = None if entry["angular"] is None else _mixture(entry["angular"], f"{where}.angular")
        else:
            angular = base.angular if base else None
        features = base.features if base else None
        if "features" in entry:
            f = entry["features"]
            features = FeatureModel(
                tuple(f.get("mean", features.mean if features else ())),
                tuple(f.get("std", features.std if features else ())),
                float(f.get("glitch_fraction", features.glitch_fraction if features else 0.0)),
                float(f.get("glitch_scale", features.glitch_scale if features else 1.0)),
            )
            if len(features.mean) != len(features.std) or not features.mean:
                raise ConfigError(f"{where}.features: mean and std must be non-empty and equal length")
        predicted = entry.get("predicted_as", base.predicted_as if base else None)
        palette[name] = TerrainType(name, linear, features, angular, predicted)
    dims = {len(t.features.mean) for t in palette.values()}
    if len(dims) != 1:
        raise ConfigError("palette: all terrains need the same feature dimension")
    for name, terrain in palette.items():
        if terrain.predicted_as is not None and terrain.predicted_as not in palette:
            raise ConfigError(f"palette.{name}.predicted_as: unknown terrain {terrain.predicted_as!r}")
    return palette


def build_environment(env: dict, palette: dict[str, TerrainType], where: str = "environment") -> EnvironmentSpec:
    values = {k: _tuple(v) for k, v in env.items()}
    try:
        return EnvironmentSpec(palette=palette, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def build_arm(entry: dict, where: str) -> Arm:
    if entry["ood_handling"] not in OOD_HANDLING:
        raise ConfigError(f"{where}.ood_handling: must be one of {OOD_HANDLING}")
    try:
        mode = CostMode(entry["mode"])
    except ValueError as exc:
        modes = [m.value for m in CostMode]
        raise ConfigError(f"{where}.mode: must be one of {modes}") from exc
    try:
        risk = RiskConfig(mode, float(entry["alpha"]), int(entry["map_samples"]), float(entry["nominal_traction"]))
        mppi = MppiConfig(
            horizon=int(entry["horizon"]),
            dt=float(entry["dt"]),
            rollout_count=int(entry["rollout_count"]),
            noise_sigma=tuple(entry["noise_sigma"]),
            limits=ControlLimits(float(entry["v_max"]), float(entry["omega_max"])),
            temperature=float(entry["temperature"]),
        )
        return Arm(
            str(entry["name"]),
            risk,
            mppi,
            float(entry["vegetation_penalty"]),
            entry["ood_handling"],
            float(entry["g_thres"]),
            float(entry["ood_penalty"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class Scenario:
    """A resolved configuration turned into library objects."""

    resolved: dict
    environment: EnvironmentSpec
    training_environment: EnvironmentSpec
    objective: ObjectiveConfig
    arms: tuple[Arm, ...]

    @classmethod
    def from_resolved(cls, resolved: dict) -> Scenario:
        palette = build_palette(resolved["palette"])
        env = build_environment(resolved["environment"], palette)
        train_env = build_environment(
            {**resolved["environment"], "alien_regions": [], "alien_patches": 0,
             **resolved["training"]["environment"]},
            palette,
            "training.environment",
        )
        obj = resolved["objective"]
        try:
            objective = ObjectiveConfig(
                goal=env.goal,
                goal_radius=float(obj["goal_radius"]),
                default_speed=float(obj["default_speed"]),
                dist_weight=float(obj["dist_weight"]),
            )
        except ValueError as exc:
            raise ConfigError(f"objective: {exc}") from exc
        arms = tuple(build_arm(a, f"arms[{i}]") for i, a in enumerate(resolved["arms"]))
        names = [a.name for a in arms]
        if len(set(names)) != len(names):
            raise ConfigError("arms: arm names must be unique")
        bench = resolved["benchmark"]
        if not bench["densities"] or int(bench["map_count"]) < 1 or int(bench["realizations_per_map"]) < 1:
            raise ConfigError("benchmark: densities, map_count and realizations_per_map must be non-empty / >= 1")
        if not float(bench["time_limit"]) > 0:
            raise ConfigError("benchmark.time_limit: must be positive")
        return cls(resolved, env, train_env, objective, arms)

    @property
    def seed(self) -> int:
        return int(self.resolved["seeds"]["seed"])

    def seed_tuple(self) -> SeedTuple:
        """Trial seeds: explicit values win, the rest derive from ``seeds.seed``."""
        s = self.resolved["seeds"]
        pick = lambda key, k: int(s[key]) if s[key] is not None else derive_seed(self.seed, k)  # noqa: E731
        return SeedTuple(pick("map", 0), pick("realization", 1), pick("planner", 2))

    def arm(self, name: str | None = None) -> Arm:
        if name is None:
            return self.arms[0]
        for arm in self.arms:
            if arm.name == name:
                return arm
        raise ConfigError(f"arms: no arm named {name!r}")

    def suite(self) -> BenchmarkSuite:
        bench, training = self.resolved["benchmark"], self.resolved["training"]
        return BenchmarkSuite(
            environment=self.environment,
            arms=self.arms,
            densities=tuple(float(d) for d in bench["densities"]),
            map_count=int(bench["map_count"]),
            realizations_per_map=int(bench["realizations_per_map"]),
            time_limit=float(bench["time_limit"]),
            control_rate=None if bench["control_rate"] is None else float(bench["control_rate"]),
            seed=self.seed,
            objective=self.objective,
            training_environment=self.training_environment,
            training_seed=int(training["seed"]),
            detector_components=int(training["components"]),
            detector_pca=int(training["pca"]),
        )


def load_scenario(path: str | Path, overrides: dict | None = None) -> Scenario:
    """Load, apply per-section overrides, resolve and build."""
    doc = load_document(path)
    if overrides:
        doc = apply_overrides(doc, overrides)
    return Scenario.from_resolved(resolve(doc))


def apply_overrides(doc: dict, overrides: dict) -> dict:
    """Shallow per-section overrides; ``arms`` entries override every arm."""
    doc = dict(doc)
    for section, values in overrides.items():
        if section == "arms":
            doc["arms"] = [{**a, **values} for a in doc.get("arms") or []]
        else:
            doc[section] = {**(doc.get(section) or {}), **values}
    return doc


__all__ = [
    "CONFIG_VERSION",
    "ConfigError",
    "Scenario",
    "apply_overrides",
    "load_document",
    "load_scenario",
    "resolve",
]
