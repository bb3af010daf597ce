"""Run configuration read from an INI file with one section per module.

Sections: ``[scenario]``, ``[channel]``, ``[metrics]``, ``[environment]``,
``[training]`` and ``[run]``. Keys are the field names of the corresponding
dataclasses; omitted keys keep their defaults. ``[training] preset`` picks the
base values (``full`` or ``desk``) before individual keys are applied.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .channel import ChannelParams
from .env import EnvConfig
from .mamo import TrainingConfig, config_dict
from .metrics import MetricWeights
from .scenario import DeskScenarioParams

MODES = ("mamo", "random", "centralized", "multiagent-fixed")
SWEEP_AXES = ("bandwidth", "required_info")
PRESETS = ("full", "desk")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: DeskScenarioParams = field(default_factory=DeskScenarioParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    metrics: MetricWeights = field(default_factory=MetricWeights)
    environment: EnvConfig = field(default_factory=EnvConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    preset: str = "full"
    mode: str = "mamo"
    seed: int = 0
    out: str = "runs/default"
    single_thread: bool = False
    eval_episodes: int = 20
    eval_weights: tuple[float, float] = (0.5, 0.5)
    sweep_bandwidth: tuple[float, ...] = (1e6, 1.5e6, 2e6, 2.5e6, 3e6)
    sweep_required_info: tuple[int, ...] = (3, 4, 5, 6, 7)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {PRESETS}, got {self.preset!r}")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be >= 1")
        if self.scenario.trajectory_csv and not Path(self.scenario.trajectory_csv).is_file():
            raise ConfigError(f"trajectory file not found: {self.scenario.trajectory_csv}")

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                v = config_dict(v) if isinstance(v, TrainingConfig) else _plain(dataclasses.asdict(v))
            out[f.name] = _plain(v)
        return out


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def _parse_value(raw: str, default: Any, name: str):
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(x) for x in text.split(",") if x.strip())
        if default is None:
            if text.lower() in ("", "none"):
                return None
            if "," in text:
                return tuple(float(x) for x in text.split(","))
            return text
        return text
    except ValueError as exc:
        raise ConfigError(f"cannot parse {name} = {raw!r}") from exc


def _apply(obj, section: configparser.SectionProxy, prefix: str, skip=()):
    names = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, raw in section.items():
        if key in skip:
            continue
        if key not in names:
            raise ConfigError(f"unknown key [{prefix}] {key}")
        changes[key] = _parse_value(raw, getattr(obj, key), f"[{prefix}] {key}")
    try:
        return replace(obj, **changes)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{prefix}]: {exc}") from exc


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Read an INI file (or defaults when ``path`` is None) and apply keyword overrides."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    base_dir = Path(".")
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            parser.read(p, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{p}: {exc}") from exc
        base_dir = p.parent
    known = ("scenario", "channel", "metrics", "environment", "training", "run")
    for sec in parser.sections():
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]")

    def section(name):
        return parser[name] if parser.has_section(name) else {}

    def apply(obj, name, skip=()):
        sec = section(name)
        return _apply(obj, sec, name, skip) if sec else obj

    scenario = apply(DeskScenarioParams(), "scenario")
    if scenario.trajectory_csv and not Path(scenario.trajectory_csv).is_absolute():
        scenario = replace(scenario, trajectory_csv=str(base_dir / scenario.trajectory_csv))
    channel = apply(ChannelParams(), "channel")
    metrics = apply(MetricWeights(), "metrics")
    envcfg = apply(EnvConfig(), "environment")
    preset = section("training").get("preset", "full").strip() if section("training") else "full"
    if preset not in PRESETS:
        raise ConfigError(f"[training] preset must be one of {PRESETS}, got {preset!r}")
    training = TrainingConfig.desk() if preset == "desk" else TrainingConfig()
    training = apply(training, "training", skip=("preset",))
    run_fields = {}
    probe = RunConfig.__dataclass_fields__
    for key, raw in section("run").items() if section("run") else ():
        if key not in probe or key in known[:-1] or key == "preset":
            raise ConfigError(f"unknown key [run] {key}")
        default = probe[key].default
        run_fields[key] = _parse_value(raw, default, f"[run] {key}")
    run_fields.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(scenario, channel, metrics, envcfg, training, preset, **run_fields)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.training = replace(cfg.training, seed=cfg.seed)
    return cfg


def dump_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
