"""Command-line entry point: ``dtvec {train,eval,sweep,export-plots}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import MODES, SWEEP_AXES, ConfigError, RunConfig, dump_config, load_config
from .env import Environment, write_trace
from .mamo import (
    Algorithm,
    evaluate,
    load_checkpoint,
    make_algorithm,
    random_act_fn,
    run_episode,
    save_checkpoint,
    train,
)
from .metrics import history_rows, write_metric_history, write_summary
from .scenario import DeskScenarioParams, ScenarioError, build_desk_scenario

TRAIN_LOG = "train_log.jsonl"
CHECKPOINT = "checkpoint.bin"
SWEEP_COLUMNS = ("quality", "cost", "profit", "qpuc", "ppuq", "at", "ar", "asc", "atc")
CONVERGENCE_COLUMNS = (
    "iteration",
    "qpuc",
    "ppuq",
    "reward_quality",
    "reward_profit",
    "scalarized_return",
    "critic_loss_vehicle",
    "critic_loss_edge",
)


class CliError(RuntimeError):
    pass


def build_env(cfg: RunConfig, scenario: DeskScenarioParams | None = None) -> Environment:
    return Environment(build_desk_scenario(scenario or cfg.scenario), cfg.channel, cfg.metrics, cfg.environment)


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def load_algorithm(cfg: RunConfig, env: Environment, checkpoint: str | Path | None) -> Algorithm:
    algo, _ = make_algorithm(env, cfg.training, cfg.mode)
    if cfg.mode == "random":
        return algo
    path = Path(checkpoint) if checkpoint else Path(cfg.out) / CHECKPOINT
    if not path.is_file():
        raise CliError(f"checkpoint not found: {path}")
    try:
        meta = load_checkpoint(path, algo)
    except (KeyError, ValueError) as exc:
        raise CliError(f"{path}: incompatible checkpoint ({exc})") from exc
    if meta.get("mode", cfg.mode) != cfg.mode:
        raise CliError(f"{path} was trained in mode {meta.get('mode')!r}, config asks for {cfg.mode!r}")
    return algo


def cmd_train(cfg: RunConfig) -> dict:
    out = _out(cfg)
    env = build_env(cfg)
    dump_config(cfg, out / "config.json")
    res = train(env, cfg.training, cfg.mode, single_thread=cfg.single_thread, log_path=out / TRAIN_LOG)
    paths = {"log": str(out / TRAIN_LOG), "config": str(out / "config.json")}
    if cfg.mode != "random":
        save_checkpoint(out / CHECKPOINT, res.algorithm, {"mode": cfg.mode, "seed": cfg.seed})
        paths["checkpoint"] = str(out / CHECKPOINT)
    return paths


def cmd_eval(cfg: RunConfig, checkpoint: str | Path | None = None) -> dict:
    """Greedy evaluation of the configured method next to the random baseline."""
    out = _out(cfg)
    env = build_env(cfg)
    algo = load_algorithm(cfg, env, checkpoint)
    w = cfg.eval_weights
    policy = evaluate(env, algo.greedy_fn(env), w, cfg.eval_episodes, cfg.seed)
    rand = evaluate(env, random_act_fn(env, np.random.default_rng([cfg.seed, 77])), w, cfg.eval_episodes, cfg.seed)
    summary = {cfg.mode: policy.summary(), "random": rand.summary()}
    summary["conventions"] = {
        "empty_slot_reward": [0.0, 0.0],
        "edge_reward_zero_range": 1.0,
        "normalization_zero_range": "lower clamp",
    }
    write_summary(out / "eval_summary.json", summary)
    rows = []
    for k, ep in enumerate(policy.episodes):
        rows.extend(history_rows(k, ep.records))
    write_metric_history(out / "eval_history.csv", rows)
    first = run_episode(env, algo.greedy_fn(env), w, policy.episodes[0].seed, trace=True)
    write_trace(out / "eval_trace.csv", first.trace)
    return summary


def sweep_points(cfg: RunConfig, axis: str) -> list[tuple[float, DeskScenarioParams]]:
    if axis == "bandwidth":
        return [(float(b), replace(cfg.scenario, edge_bandwidth=float(b))) for b in cfg.sweep_bandwidth]
    if axis == "required_info":
        return [(int(k), replace(cfg.scenario, required_per_entity=int(k))) for k in cfg.sweep_required_info]
    raise CliError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def cmd_sweep(cfg: RunConfig, axis: str, checkpoint: str | Path | None = None) -> list[dict]:
    """Evaluate one policy at every point of a scenario axis; one summary row per point."""
    out = _out(cfg)
    points = sweep_points(cfg, axis)
    base_env = build_env(cfg)
    algo = load_algorithm(cfg, base_env, checkpoint)
    rows = []
    for value, params in points:
        env = build_env(cfg, params)
        if env.vehicle_obs_dim != base_env.vehicle_obs_dim or env.edge_obs_dim != base_env.edge_obs_dim:
            raise CliError(f"sweep point {axis}={value} changes observation sizes")
        if cfg.mode == "random":
            act = random_act_fn(env, np.random.default_rng([cfg.seed, 77]))
        else:
            act = algo.greedy_fn(env)
        s = evaluate(env, act, cfg.eval_weights, cfg.eval_episodes, cfg.seed).summary()
        row = {"axis": axis, "value": value}
        for key in SWEEP_COLUMNS:
            row[key] = s[key]
            row[f"{key}_se"] = s[f"{key}_se"]
        rows.append(row)
    cols = ["axis", "value"] + [c for k in SWEEP_COLUMNS for c in (k, f"{k}_se")]
    with (out / f"sweep_{axis}.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
    return rows


def read_train_log(path: Path) -> list[dict]:
    rows = []
    with path.open(encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise CliError(f"{path}:{n}: malformed log line") from exc
    return rows


def cmd_export_plots(run_dir: str | Path) -> list[str]:
    """Plot-ready CSVs: convergence (one row per iteration) and one file per sweep axis."""
    run = Path(run_dir)
    if not run.is_dir():
        raise CliError(f"run directory not found: {run}")
    written = []
    log = run / TRAIN_LOG
    sweeps = sorted(run.glob("sweep_*.csv"))
    if not log.is_file() and not sweeps:
        raise CliError(f"{run} has neither {TRAIN_LOG} nor sweep_*.csv")
    if log.is_file():
        rows = read_train_log(log)
        dest = run / "plot_convergence.csv"
        with dest.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CONVERGENCE_COLUMNS)
            for r in rows:
                w.writerow([_fmt(r.get(c)) for c in CONVERGENCE_COLUMNS])
        written.append(str(dest))
    for src in sweeps:
        with src.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        axis = src.stem[len("sweep_") :]
        dest = run / f"plot_sweep_{axis}.csv"
        with dest.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([axis, "qpuc", "ppuq", "at", "ar", "asc", "atc"])
            for r in rows:
                w.writerow([r["value"], r["qpuc"], r["ppuq"], r["at"], r["ar"], r["asc"], r["atc"]])
        written.append(str(dest))
    return written


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="INI configuration file")
    p.add_argument("--seed", type=int, help="run seed (training and evaluation)")
    p.add_argument("--single-thread", action="store_true", help="deterministic interleaved actor/learner mode")
    p.add_argument("--mode", choices=MODES, help="method to train or evaluate")
    p.add_argument("--out", metavar="DIR", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtvec", description="Digital-twin sensing and uploading simulator and trainer")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("train", help="train a method and write log and checkpoint")
    _common(p)
    p = sub.add_parser("eval", help="evaluate a checkpoint next to the random baseline")
    _common(p)
    p.add_argument("--checkpoint", metavar="PATH")
    p = sub.add_parser("sweep", help="evaluate a policy along a scenario axis")
    _common(p)
    p.add_argument("--sweep", choices=SWEEP_AXES, required=True)
    p.add_argument("--checkpoint", metavar="PATH")
    p = sub.add_parser("export-plots", help="write plot-ready CSV files for a run directory")
    p.add_argument("run_dir", nargs="?", help="run directory (defaults to --out)")
    p.add_argument("--out", metavar="DIR")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export-plots":
            run_dir = args.run_dir or args.out
            if not run_dir:
                raise CliError("export-plots needs a run directory")
            for path in cmd_export_plots(run_dir):
                print(path)
            return 0
        cfg = load_config(
            args.config,
            seed=args.seed,
            mode=args.mode,
            out=args.out,
            single_thread=True if args.single_thread else None,
        )
        if args.command == "train":
            for name, path in cmd_train(cfg).items():
                print(f"{name}: {path}")
        elif args.command == "eval":
            summary = cmd_eval(cfg, args.checkpoint)
            for name in (cfg.mode, "random"):
                s = summary[name]
                print(f"{name}: return={s['scalarized_return']:.4f} qpuc={s['qpuc']} ppuq={s['ppuq']}")
        elif args.command == "sweep":
            for row in cmd_sweep(cfg, args.sweep, args.checkpoint):
                print(f"{row['axis']}={row['value']}: qpuc={row['qpuc']} atc={row['atc']} asc={row['asc']}")
        return 0
    except (CliError, ConfigError, ScenarioError, OSError, ValueError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"dtvec: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
