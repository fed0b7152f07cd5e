"""Command-line entry point.

    hscore run <config.yaml>
    hscore validate <config.yaml>
    hscore simulate <model> --theta ... --T 100 --seed 1 --out data.csv

A config is one flat YAML mapping; see ``CONFIG_KEYS`` for the schema.
Exit codes: 0 success, 2 invalid input, 3 sampler degeneracy (the trace
computed so far is still written).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .datasets import read_dataset, write_dataset
from .experiments import (
    StudyConfig,
    StudyResult,
    run_kangaroo_study,
    run_normal_cases,
    run_phase_plane,
    run_sv_study,
    write_study_csv,
    write_summary_json,
)
from .models import MODEL_IDS, IidModel, get_model, simulate_dataset
from .resampling import DegeneracyError
from .rng import child_rng, child_seed
from .smc import SmcConfig, gaussian_proposal, run_smc
from .smc2 import MODES, Smc2Config, run_smc2

EXIT_OK, EXIT_INVALID, EXIT_DEGENERATE = 0, 2, 3

STUDIES = ("normal", "phase_plane", "sv", "kangaroo", "model")

# key -> (type, default); None default means "study default"
CONFIG_KEYS = {
    "study": (str, None),
    "case": (int, None),
    "scale": (str, "desk"),
    "model": (str, None),
    "model_options": (dict, {}),
    "data": (str, None),
    "simulate_theta": (list, None),
    "T": (int, None),
    "seed": (int, 0),
    "replications": (int, None),
    "n_theta": (int, None),
    "n_x": (int, None),
    "n_x_max": (int, 1024),
    "ess_threshold_ratio": (float, 0.5),
    "mh_steps": (int, 3),
    "mixture_components": (int, 5),
    "hscore_mode": (str, "auto"),
    "kde_draws": (int, None),
    "kde_bandwidth": (float, None),
    "delta_t": (float, None),
    "permutation": (str, "random"),
    "output_dir": (str, "results"),
    "reproducible": (bool, True),
}


class ConfigError(ValueError):
    pass


def _coerce(key, value):
    kind, _ = CONFIG_KEYS[key]
    if value is None:
        return None
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if isinstance(value, kind):
        return value
    raise ConfigError(f"{key}: expected {kind.__name__}, got {type(value).__name__}")


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return resolve_config(raw, base=path.parent)


def resolve_config(raw: dict, base=Path(".")) -> dict:
    """Validate a raw mapping and fill defaults."""
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = {k: _coerce(k, raw[k]) if k in raw else default for k, (_, default) in CONFIG_KEYS.items()}
    if cfg["study"] not in STUDIES:
        raise ConfigError(f"study must be one of {', '.join(STUDIES)}")
    if not 0.0 < cfg["ess_threshold_ratio"] < 1.0:
        raise ConfigError("ess_threshold_ratio must lie in (0, 1)")
    if cfg["permutation"] not in ("identity", "random"):
        raise ConfigError("permutation must be 'identity' or 'random'")
    if cfg["scale"] not in ("desk", "paper"):
        raise ConfigError("scale must be 'desk' or 'paper'")
    if cfg["hscore_mode"] not in MODES:
        raise ConfigError(f"hscore_mode must be one of {', '.join(MODES)}")
    for key in ("replications", "n_theta", "n_x", "T", "kde_draws"):
        if cfg[key] is not None and cfg[key] < 1:
            raise ConfigError(f"{key} must be positive")
    if cfg["study"] == "normal" and cfg["case"] not in (1, 2, 3, 4):
        raise ConfigError("normal study needs case: 1, 2, 3 or 4")
    if cfg["study"] == "model":
        if cfg["model"] not in MODEL_IDS:
            raise ConfigError(f"model must be one of {', '.join(MODEL_IDS)}")
        if (cfg["data"] is None) == (cfg["simulate_theta"] is None):
            raise ConfigError("model study needs exactly one of data or simulate_theta")
        if cfg["simulate_theta"] is not None and cfg["T"] is None:
            raise ConfigError("simulate_theta needs T")
        try:
            get_model(cfg["model"], **cfg["model_options"])
        except TypeError as exc:
            raise ConfigError(f"model_options: {exc}") from exc
    if cfg["data"] is not None:
        data_path = Path(cfg["data"])
        if not data_path.is_absolute():
            data_path = base / data_path
        if not data_path.is_file():
            raise ConfigError(f"data file not found: {data_path}")
        cfg["data"] = str(data_path)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _header(cfg):
    return (f"config_hash={config_hash(cfg)}", f"seed={cfg['seed']}", f"hscore_version={__version__}", f"study={cfg['study']}")


def _study_config(cfg) -> StudyConfig:
    names = {f.name for f in fields(StudyConfig)}
    return StudyConfig(**{k: cfg[k] for k in names & set(cfg) if cfg[k] is not None})


def _run_model(cfg) -> StudyResult:
    model = get_model(cfg["model"], **cfg["model_options"])
    seed = cfg["seed"]
    if cfg["data"] is not None:
        ds = read_dataset(cfg["data"])
        y, times = ds.y, ds.t
    else:
        y = simulate_dataset(model, np.asarray(cfg["simulate_theta"], dtype=float), cfg["T"], child_rng(seed, 0))
        times = np.arange(1.0, cfg["T"] + 1.0)
    reps = cfg["replications"] or 1
    result = StudyResult(f"model_{model.name}")
    for r in range(reps):
        run_seed = child_seed(seed, 2, r)
        try:
            if isinstance(model, IidModel):
                perm = child_rng(seed, 1, r).permutation(y.shape[0]) if cfg["permutation"] == "random" else None
                init = None
                if model.first_proper_index > 0:
                    # wide Gaussian around the first observation in run order
                    first = y[perm[0]] if perm is not None else y[0]
                    init = gaussian_proposal(np.full(model.dim_theta, float(np.mean(first))), 10.0)
                smc = SmcConfig(
                    n_theta=cfg["n_theta"] or 1024,
                    ess_threshold_ratio=cfg["ess_threshold_ratio"],
                    mh_steps_per_temper=cfg["mh_steps"],
                    mixture_components=cfg["mixture_components"],
                    init_proposal=init,
                    seed=run_seed,
                )
                trace = run_smc(model, y, smc, permutation=perm)
            else:
                smc2 = Smc2Config(
                    n_theta=cfg["n_theta"] or 1024,
                    n_x_init=cfg["n_x"] or 128,
                    n_x_max=max(cfg["n_x_max"], cfg["n_x"] or 128),
                    ess_threshold_ratio=cfg["ess_threshold_ratio"],
                    mh_steps=cfg["mh_steps"],
                    mixture_components=cfg["mixture_components"],
                    hscore_mode=cfg["hscore_mode"],
                    kde_draws=cfg["kde_draws"] or 1024,
                    kde_bandwidth=cfg["kde_bandwidth"] or 0.1,
                    seed=run_seed,
                )
                trace = run_smc2(model, y, smc2, times=times)
        except DegeneracyError as exc:
            if exc.trace is not None:
                result.traces[(r, model.name)] = exc.trace
            raise _Degenerate(str(exc), result) from exc
        result.traces[(r, model.name)] = trace
    result.summary = {
        "final_log_evidence": [result.traces[(r, model.name)].log_evidence_cum[-1] for r in range(reps)],
        "final_h_score": [result.traces[(r, model.name)].h_cum[-1] for r in range(reps)],
    }
    return result


class _Degenerate(RuntimeError):
    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


def _phase_plane_result() -> StudyResult:
    plane = run_phase_plane()
    result = StudyResult("phase_plane")
    result.summary = {
        "mu_grid": plane.mu_grid,
        "sigma2_grid": plane.sigma2_grid,
        "sign_h": plane.sign_h,
        "sign_kl": plane.sign_kl,
        "b_h": plane.b_h,
        "b_kl": plane.b_kl,
    }
    return result


def execute(cfg) -> StudyResult:
    # output is deterministic either way; reproducible mode also keeps
    # everything in one process
    if cfg["reproducible"]:
        os.environ["HSCORE_THREADS"] = "1"
    study = cfg["study"]
    if study == "normal":
        return run_normal_cases(cfg["case"], _study_config(cfg))
    if study == "phase_plane":
        return _phase_plane_result()
    if study == "sv":
        return run_sv_study(_study_config(cfg), cfg["scale"])
    if study == "kangaroo":
        return run_kangaroo_study(_study_config(cfg), cfg["scale"], data_path=cfg["data"])
    return _run_model(cfg)


def _persist(result, cfg):
    out = Path(cfg["output_dir"])
    header = _header(cfg)
    csv_path = write_study_csv(result, out / f"{result.study}_traces.csv", header=header)
    json_path = write_summary_json(result, out / f"{result.study}_summary.json", extra={"config_hash": config_hash(cfg), "seed": cfg["seed"]})
    return csv_path, json_path


def cmd_run(path) -> int:
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        result = execute(cfg)
    except _Degenerate as exc:
        paths = _persist(exc.result, cfg)
        print(f"error: sampler degenerated: {exc}; partial trace in {paths[0]}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DegeneracyError as exc:
        print(f"error: sampler degenerated: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    csv_path, json_path = _persist(result, cfg)
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return EXIT_OK


def cmd_validate(path) -> int:
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(yaml.safe_dump(cfg, sort_keys=True), end="")
    return EXIT_OK


def cmd_simulate(model_id, theta, T, seed, out, times=None) -> int:
    try:
        model = get_model(model_id)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_INVALID
    if T < 0:
        print("error: T must be non-negative", file=sys.stderr)
        return EXIT_INVALID
    try:
        y = simulate_dataset(model, np.asarray(theta, dtype=float), T, child_rng(seed, 0), times=times)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    t = np.arange(1.0, T + 1.0) if times is None else np.asarray(times, dtype=float)
    comments = (f"model={model_id}", f"theta={list(map(float, theta))}", f"seed={seed}", f"hscore_version={__version__}")
    write_dataset(out, t, y, comments=comments)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hscore", description="Prequential H-score and evidence for Bayesian models")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the study described by a config file")
    p.add_argument("config")
    p = sub.add_parser("validate", help="check a config and print it with defaults filled in")
    p.add_argument("config")
    p = sub.add_parser("simulate", help="simulate a dataset from a model")
    p.add_argument("model")
    p.add_argument("--theta", type=float, nargs="+", required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "validate":
        return cmd_validate(args.config)
    return cmd_simulate(args.model, args.theta, args.T, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())
