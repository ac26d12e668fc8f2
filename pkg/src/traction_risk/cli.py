"""``traction-risk`` command line.

Subcommands::

    trial       one closed-loop episode from a scenario file
    bench       every arm x density x map x realization of a scenario file
    env         dump a generated map (distributions, ground truth, features)
    ood fit     fit a confidence detector to a feature map
    ood score   per-cell confidence and OOD mask for a feature map
    cvar eval   VaR / CVaR of a categorical distribution or of raw samples

Every command that writes files also writes ``manifest.json`` listing the
resolved inputs, seeds and a SHA-256 of every output.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import sys
from importlib import metadata
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import ood
from .config import ConfigError, Scenario, apply_overrides, load_document, resolve
from .dynamics import write_trajectory_csv
from .objective import CostMode
from .sim import (
    aggregate,
    fit_suite_detector,
    generate_environment,
    realize_ground_truth,
    run_trial,
    run_trials,
)
from .traction import (
    CategoricalDistribution,
    left_cvar,
    left_var,
    right_cvar,
    right_cvar_empirical,
)

log = logging.getLogger("traction_risk")

MANIFEST_SCHEMA = "run_manifest"
MANIFEST_VERSION = 1
TRIAL_SCHEMA = "trial_result"


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _version() -> str:
    try:
        return metadata.version("traction-risk")
    except metadata.PackageNotFoundError:  # pragma: no cover - source checkout
        return "unknown"


class Run:
    """Collects outputs of one command and writes its manifest."""

    def __init__(self, command: str, out: Path, argv: Sequence[str], config: Any, inputs: Sequence[Path] = ()):
        self.command = command
        self.out = out
        self.argv = list(argv)
        self.config = config
        self.inputs = {str(p): _sha256_file(p) for p in inputs}
        self.started = _now()
        self.outputs: list[Path] = []
        self.seeds: dict = {}
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def write_json(self, name: str, obj: Any) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(obj, indent=2) + "\n")
        return p

    def finish(self) -> Path:
        content = {"command": self.command, "config": self.config, "inputs": self.inputs, "seeds": self.seeds}
        manifest = {
            "schema": MANIFEST_SCHEMA,
            "version": MANIFEST_VERSION,
            "command": self.command,
            "argv": self.argv,
            "package_version": _version(),
            "input_hash": hashlib.sha256(_canonical(content).encode()).hexdigest(),
            "config": self.config,
            "inputs": self.inputs,
            "seeds": self.seeds,
            "started_at": self.started,
            "finished_at": _now(),
            "outputs": [{"path": p.name, "sha256": _sha256_file(p)} for p in self.outputs],
        }
        path = self.out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2) + "\n")
        return path


def write_csv(path: Path, rows: Sequence[dict]) -> None:
    with path.open("w", newline="") as fh:
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if v is None else v for k, v in row.items()})


def write_grid_csv(path: Path, grid: np.ndarray, fmt=repr) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        for row in grid:
            writer.writerow([fmt(v) for v in row.tolist()])


# -- scenario plumbing ------------------------------------------------------

def _overrides(args: argparse.Namespace) -> dict:
    arm: dict = {}
    if getattr(args, "mode", None) is not None:
        arm["mode"] = args.mode
    if getattr(args, "alpha", None) is not None:
        arm["alpha"] = args.alpha
    if getattr(args, "g_thres", None) is not None:
        arm["g_thres"] = args.g_thres
    out: dict = {}
    if arm:
        out["arms"] = arm
    if getattr(args, "seed", None) is not None:
        # a command-line seed replaces every seed field of the file
        out["seeds"] = {"seed": args.seed, "map": None, "realization": None, "planner": None}
    return out


def _scenario(args: argparse.Namespace) -> Scenario:
    doc = load_document(args.config)
    resolved = resolve(apply_overrides(doc, _overrides(args)))
    return Scenario.from_resolved(resolved)


def _detector(args: argparse.Namespace, scenario: Scenario, arms) -> ood.OodDetector | None:
    if getattr(args, "detector", None):
        return ood.OodDetector.load(args.detector)
    if any(a.ood_handling != "none" for a in arms):
        return fit_suite_detector(scenario.suite())
    return None


# -- commands -------------------------------------------------------------

def cmd_trial(args: argparse.Namespace) -> int:
    scenario = _scenario(args)
    arm = scenario.arm(args.arm)
    seeds = scenario.seed_tuple()
    env = generate_environment(scenario.environment, np.random.default_rng(seeds.map))
    truth = realize_ground_truth(env, np.random.default_rng(seeds.realization))
    detector = _detector(args, scenario, [arm])
    bench = scenario.resolved["benchmark"]
    log.info("trial: arm %s, seeds %s", arm.name, seeds)
    result = run_trial(
        env, truth, arm, float(bench["time_limit"]), bench["control_rate"], seeds, detector,
        scenario.objective, record_diagnostics=args.log_diagnostics,
    )
    inputs = [Path(args.config)] + ([Path(args.detector)] if args.detector else [])
    run = Run("trial", Path(args.out), args.argv, scenario.resolved, inputs)
    run.seeds = {"map": seeds.map, "realization": seeds.realization, "planner": seeds.planner}
    run.write_json("trial.json", {
        "schema": TRIAL_SCHEMA,
        "version": 1,
        **result.summary(),
        "time_limit": float(bench["time_limit"]),
        "arm_config": arm.describe(),
    })
    write_trajectory_csv(result.trajectory, run.path("trajectory.csv"))
    if args.log_diagnostics:
        with run.path("diagnostics.jsonl").open("w") as fh:
            for row in result.diagnostics:
                fh.write(json.dumps(row) + "\n")
    run.finish()
    status = "reached goal in %.1f s" % result.time_to_goal if result.success else result.failure_reason
    print(f"{arm.name}: {status}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    scenario = _scenario(args)
    suite = scenario.suite()
    detector = _detector(args, scenario, suite.arms)
    log.info(
        "bench: %d arms x %d densities x %d maps x %d realizations",
        len(suite.arms), len(suite.densities), suite.map_count, suite.realizations_per_map,
    )
    rows = run_trials(suite, args.parallelism, detector)
    table = aggregate(rows)
    inputs = [Path(args.config)] + ([Path(args.detector)] if args.detector else [])
    run = Run("bench", Path(args.out), args.argv, scenario.resolved, inputs)
    run.seeds = {"suite": suite.seed, "training": suite.training_seed}
    write_csv(run.path("trials.csv"), rows)
    run.write_json("aggregate.json", table)
    write_csv(run.path("aggregate.csv"), table)
    run.finish()
    for entry in table:
        t = "-" if entry["time_mean"] is None else f"{entry['time_mean']:.2f} s"
        print(f"{entry['arm']:<24} density {entry['density']:<5} success {entry['success_rate']:.2f}  time {t}")
    return 0


def cmd_env(args: argparse.Namespace) -> int:
    scenario = _scenario(args)
    seeds = scenario.seed_tuple()
    spec = scenario.training_environment if args.training else scenario.environment
    env = generate_environment(spec, np.random.default_rng(seeds.map))
    truth = realize_ground_truth(env, np.random.default_rng(seeds.realization))
    run = Run("env", Path(args.out), args.argv, scenario.resolved, [Path(args.config)])
    run.seeds = {"map": seeds.map, "realization": seeds.realization}
    run.write_json("distribution_map.json", env.model_map.to_dict())
    run.write_json("truth_map.json", truth.to_dict())
    run.write_json("features.json", env.features.to_dict())
    write_grid_csv(run.path("semantic.csv"), np.array(env.terrain_names, dtype=object)[env.semantic], fmt=str)
    run.finish()
    return 0


def _load_features(path: str) -> ood.FeatureMap:
    return ood.FeatureMap.from_dict(json.loads(Path(path).read_text()))


def cmd_ood_fit(args: argparse.Namespace) -> int:
    fmap = _load_features(args.features)
    detector = ood.fit(fmap.known_features(), args.components, args.pca, args.seed)
    config = {"components": args.components, "pca": args.pca, "seed": args.seed}
    run = Run("ood fit", Path(args.out), args.argv, config, [Path(args.features)])
    run.seeds = {"seed": args.seed}
    run.write_json("detector.json", detector.to_dict())
    run.finish()
    print(f"detector: p_max {detector.p_max:.4f}, p_min {detector.p_min:.4f}")
    return 0


def cmd_ood_score(args: argparse.Namespace) -> int:
    detector = ood.OodDetector.load(args.detector)
    fmap = _load_features(args.features)
    grid = detector.confidence_grid(fmap.features)
    mask = ood.ood_mask(detector, fmap.features, args.g_thres, fmap.known)
    config = {"g_thres": args.g_thres}
    run = Run("ood score", Path(args.out), args.argv, config, [Path(args.detector), Path(args.features)])
    write_grid_csv(run.path("confidence.csv"), grid)
    write_grid_csv(run.path("mask.csv"), mask.astype(int), fmt=str)
    run.finish()
    print(f"{int(mask.sum())} of {mask.size} cells flagged at g_thres {args.g_thres}")
    return 0


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ValueError(f"cannot parse number list {text!r}") from exc


def cmd_cvar_eval(args: argparse.Namespace) -> int:
    if (args.probs is None) == (args.values is None):
        raise ValueError("give exactly one of --probs or --values")
    if args.values is not None:
        values = _floats(args.values)
        if not values:
            raise ValueError("--values is empty")
        out = {"alpha": args.alpha, "tail": "right", "count": len(values),
               "cvar": right_cvar_empirical(values, args.alpha), "mean": float(np.mean(values))}
    else:
        dist = CategoricalDistribution(np.asarray(_floats(args.probs)))
        if args.tail == "left":
            out = {"alpha": args.alpha, "tail": "left", "var": left_var(dist, args.alpha),
                   "cvar": left_cvar(dist, args.alpha)}
        else:
            out = {"alpha": args.alpha, "tail": "right", "cvar": right_cvar(dist, args.alpha)}
        out["mean"] = dist.mean()
    print(json.dumps(out))
    return 0


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="traction-risk", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="scenario file (YAML or JSON)")
        p.add_argument("--seed", type=int, help="replace every seed in the file")
        p.add_argument("--out", required=True, help="output directory")

    def arm_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--mode", choices=[m.value for m in CostMode], help="override the cost mode")
        p.add_argument("--alpha", type=float, help="override the risk level")
        p.add_argument("--g-thres", type=float, help="override the OOD confidence threshold")
        p.add_argument("--detector", help="fitted detector JSON (default: fit on the training map)")

    p = sub.add_parser("trial", help="run one closed-loop trial")
    scenario_flags(p)
    arm_flags(p)
    p.add_argument("--arm", help="arm name (default: first arm)")
    p.add_argument("--log-diagnostics", action="store_true", help="write per-cycle diagnostics as JSON lines")
    p.set_defaults(func=cmd_trial)

    p = sub.add_parser("bench", help="run a benchmark suite")
    scenario_flags(p)
    arm_flags(p)
    p.add_argument("--parallelism", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("env", help="write a generated map")
    scenario_flags(p)
    p.add_argument("--training", action="store_true", help="write the detector training map instead")
    p.set_defaults(func=cmd_env)

    p = sub.add_parser("ood", help="OOD detector tools")
    ood_sub = p.add_subparsers(dest="ood_command", required=True)
    q = ood_sub.add_parser("fit", help="fit a detector to a feature map")
    q.add_argument("--features", required=True, help="feature map JSON")
    q.add_argument("--components", type=int, default=2)
    q.add_argument("--pca", type=int, default=2)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True, help="output directory")
    q.set_defaults(func=cmd_ood_fit)
    q = ood_sub.add_parser("score", help="confidence grid and OOD mask")
    q.add_argument("--detector", required=True)
    q.add_argument("--features", required=True)
    q.add_argument("--g-thres", type=float, default=0.75)
    q.add_argument("--out", required=True, help="output directory")
    q.set_defaults(func=cmd_ood_score)

    p = sub.add_parser("cvar", help="risk measure utilities")
    cvar_sub = p.add_subparsers(dest="cvar_command", required=True)
    q = cvar_sub.add_parser("eval", help="VaR / CVaR of a distribution")
    q.add_argument("--probs", help="bin probabilities over [0, 1], comma separated")
    q.add_argument("--values", help="raw samples, comma separated (right-tail empirical CVaR)")
    q.add_argument("--alpha", type=float, required=True)
    q.add_argument("--tail", choices=("left", "right"), default="left")
    q.set_defaults(func=cmd_cvar_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
