"""Command-line driver: ``ktube <experiment> --config run.json [overrides]``.

Outputs go to ``output_dir`` (``--output-dir``, then the config file, then
``$KTUBE_OUTPUT_DIR``): one CSV per statistic, JSON documents and a
``manifest.json`` listing every file with its SHA-256.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__
from .dynamics import write_trajectory_csv
from .errors import ConfigError, InvalidParams, KtubeError, StuckPoint
from .experiments import EXPERIMENTS, RUNNERS, ExperimentResult, RunConfig
from .geometry import build_tube

CSV_COLUMNS = ("statistic", "param", "value", "std_error", "n", "seed")
CONFIG_KEYS = {"experiment", "tube", "seed", "trajectories", "steps", "burn_in", "t_horizon",
               "samples", "workers", "output_dir", "dump_trajectories"}
_COUNTS = ("trajectories", "steps", "samples", "workers")


def _int(doc: Mapping[str, Any], key: str) -> int:
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ConfigError(key, f"{key} must be an integer")
    return int(v)


def parse_config(path: str | os.PathLike | None = None, overrides: Mapping[str, Any] | None = None,
                 experiment: str | None = None) -> RunConfig:
    """Merge a JSON config file with overrides (overrides win) and validate it."""
    doc: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError("config", f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config", "config file must hold a JSON object")
    unknown = sorted(set(doc) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(unknown[0], f"unknown config key {unknown[0]!r}")
    for k, v in (overrides or {}).items():
        if v is not None:
            doc[k] = v
    if experiment is not None:
        doc["experiment"] = experiment
    if doc.get("experiment") not in EXPERIMENTS:
        raise ConfigError("experiment", f"experiment must be one of {EXPERIMENTS}")
    if "seed" not in doc:
        raise ConfigError("seed", "seed is required (no wall-clock default)")
    seed = _int(doc, "seed")
    if seed < 0:
        raise ConfigError("seed", "seed must be >= 0")
    if "tube" not in doc or not isinstance(doc["tube"], dict):
        raise ConfigError("tube", "a tube spec object is required")
    if "output_dir" not in doc and os.environ.get("KTUBE_OUTPUT_DIR"):
        doc["output_dir"] = os.environ["KTUBE_OUTPUT_DIR"]
    cfg = RunConfig(experiment=doc["experiment"], tube=dict(doc["tube"]), seed=seed)
    for key in _COUNTS:
        if key in doc:
            setattr(cfg, key, _int(doc, key))
            if getattr(cfg, key) <= 0:
                raise ConfigError(key, f"{key} must be positive")
    if "burn_in" in doc:
        cfg.burn_in = _int(doc, "burn_in")
        if cfg.burn_in < 0:
            raise ConfigError("burn_in", "burn_in must be >= 0")
    if "t_horizon" in doc and doc["t_horizon"] is not None:
        cfg.t_horizon = float(doc["t_horizon"])
        if not cfg.t_horizon > 0:
            raise ConfigError("t_horizon", "t_horizon must be positive")
    if "output_dir" in doc:
        cfg.output_dir = str(doc["output_dir"])
    cfg.dump_trajectories = bool(doc.get("dump_trajectories", False))
    _validate_experiment(cfg)
    return cfg


def _validate_experiment(cfg: RunConfig) -> None:
    try:
        tube = build_tube(cfg.tube, cfg.seed)
    except InvalidParams as exc:
        raise ConfigError("tube", str(exc)) from exc
    needs_walk = cfg.experiment not in ("simulate", "cosine-test", "kernel-check")
    if needs_walk and cfg.burn_in >= cfg.steps:
        raise ConfigError("burn_in", "burn_in must be smaller than steps")
    if cfg.experiment == "diffusivity":
        if cfg.t_horizon is None:
            raise ConfigError("t_horizon", "diffusivity needs t_horizon")
        if cfg.steps < 2 * cfg.burn_in:
            raise ConfigError("steps", "diffusivity needs steps >= 2 * burn_in")
        if cfg.trajectories < 100:
            raise ConfigError("trajectories", "diffusivity needs at least 100 trajectories")
    if cfg.experiment == "induced-chords" and tube.inner_radius is None:
        raise ConfigError("tube.family", "induced-chords needs a NestedPair tube")
    if cfg.experiment == "invariant-hist" and tube.period is None and not (
            tube.family == "StraightCylinder" and tube.dimension == 3):
        raise ConfigError("tube.family", "invariant-hist needs a periodic family or a d = 3 cylinder")


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _json_default(o: Any):
    if hasattr(o, "item"):
        return o.item()
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_outputs(cfg: RunConfig, res: ExperimentResult, wall: float) -> dict:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    for name, rows in sorted(res.tables.items()):
        path = out / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row in rows:
                w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
        files[path.name] = _sha256(path)
    for name, doc in sorted(res.documents.items()):
        path = out / f"{name}.json"
        path.write_text(json.dumps(doc, sort_keys=True, indent=2, default=_json_default) + "\n")
        files[path.name] = _sha256(path)
    if res.dumps:
        ddir = out / "trajectories"
        ddir.mkdir(exist_ok=True)
        for name, (alpha, tau) in sorted(res.dumps.items()):
            path = ddir / f"{name}.csv"
            write_trajectory_csv(path, alpha, tau)
            files[f"trajectories/{path.name}"] = _sha256(path)
    manifest = {
        "config": asdict(cfg),
        "version": __version__,
        "files": files,
        "anomalies": res.anomalies,
        "gates": {k: bool(v) for k, v in res.gates.items()},
        "wall_clock_seconds": wall,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2, default=_json_default) + "\n")
    return manifest


def run(cfg: RunConfig) -> dict:
    """Execute one experiment and write its outputs; returns the manifest."""
    tube = build_tube(cfg.tube, cfg.seed)
    t0 = time.perf_counter()
    res = RUNNERS[cfg.experiment](tube, cfg)
    return write_outputs(cfg, res, time.perf_counter() - t0)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ktube", description="Knudsen stochastic billiards in random tubes.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--trajectories", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--t-horizon", dest="t_horizon", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--tube", help="tube spec as inline JSON")
    p.add_argument("--gate", action="store_true", help="exit with status 2 if any acceptance gate fails")
    p.add_argument("--dump-trajectories", dest="dump_trajectories", action="store_true", default=None)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in ("seed", "workers", "trajectories", "steps", "burn_in",
                                               "t_horizon", "samples", "output_dir", "dump_trajectories")}
    if args.tube is not None:
        try:
            overrides["tube"] = json.loads(args.tube)
        except json.JSONDecodeError as exc:
            print(f"error: --tube is not valid JSON: {exc}", file=sys.stderr)
            return 1
    try:
        cfg = parse_config(args.config, overrides, args.experiment)
        manifest = run(cfg)
    except ConfigError as exc:
        print(f"config error [{exc.field}]: {exc}", file=sys.stderr)
        return 1
    except StuckPoint as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 3
    except KtubeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name, ok in sorted(manifest["gates"].items()):
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"outputs written to {cfg.output_dir}")
    if args.gate and not all(manifest["gates"].values()):
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
