"""Run configuration: flat dotted keys in a text file, env overrides.

Example file:

    cluster.slots = 16
    trainer.group_size = 4
    trainer.learning_rate = 0.25
    run.seed = 3

Environment variables override file values with the DESKGRID_ prefix and
double underscores between segments, e.g. DESKGRID_TRAINER__GROUP_SIZE=8.
Every value is validated against documented bounds before any component
starts, and the resolved mapping is serialized into the run directory as
the reproducibility manifest.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from .errors import ConfigError
from .grpo import TrainerConfig
from .entropulse import TrainSettings

ENV_PREFIX = "DESKGRID_"

DEFAULTS = {
    "cluster.bind": "127.0.0.1:7700",
    "cluster.http": "127.0.0.1:7701",
    "cluster.slots": 16,
    "cluster.heartbeat_interval": 1.0,
    "cluster.timeout_intervals": 3,
    "trainer.group_size": 4,
    "trainer.clip_eps": 0.2,
    "trainer.kl_coef": 0.05,
    "trainer.learning_rate": 0.25,
    "trainer.reference_reset": "phase_start",
    "replay.capacity": 256,
    "replay.staleness_limit": 1,
    "replay.min_batch_steps": 48,
    "replay.max_batch_steps": 512,
    "rollout.tasks_per_update": 8,
    "rollout.workers": 8,
    "bc.lr": 0.5,
    "sft.lr": 0.5,
    "sft.weight_decay": 0.04,
    "suite.profile": "ablation",
    "run.seed": 3,
    "run.action_space": "api-gui",
}

_BOUNDS = {
    "cluster.slots": (1, 4096),
    "cluster.heartbeat_interval": (0.01, 60.0),
    "cluster.timeout_intervals": (1, 100),
    "trainer.group_size": (2, 64),
    "trainer.clip_eps": (1e-6, 0.999999),
    "trainer.kl_coef": (0.0, 100.0),
    "trainer.learning_rate": (1e-9, 100.0),
    "replay.capacity": (1, 1_000_000),
    "replay.staleness_limit": (0, 1000),
    "replay.min_batch_steps": (1, 1_000_000),
    "replay.max_batch_steps": (1, 1_000_000),
    "rollout.tasks_per_update": (1, 1000),
    "rollout.workers": (1, 256),
    "bc.lr": (0.0, 100.0),
    "sft.lr": (0.0, 100.0),
    "sft.weight_decay": (0.0, 1.0),
    "run.seed": (0, 2**31 - 1),
}

_CHOICES = {
    "trainer.reference_reset": ("phase_start", "never"),
    "suite.profile": ("smoke", "ablation"),
    "run.action_space": ("api-gui", "gui-only"),
}


def _coerce(key: str, raw):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        return str(raw).lower() in ("1", "true", "yes")
    if isinstance(default, int):
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected number, got {raw!r}") from None
    return str(raw)


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    def address(self, key: str) -> tuple:
        host, _, port = self.values[key].rpartition(":")
        try:
            return (host, int(port))
        except ValueError:
            raise ConfigError(f"{key}: expected host:port, got {self.values[key]!r}")

    def train_settings(self) -> TrainSettings:
        v = self.values
        return TrainSettings(
            trainer=TrainerConfig(
                group_size=v["trainer.group_size"],
                clip_eps=v["trainer.clip_eps"],
                kl_coef=v["trainer.kl_coef"],
                learning_rate=v["trainer.learning_rate"],
                reference_reset=v["trainer.reference_reset"]),
            run_seed=v["run.seed"],
            include_api=v["run.action_space"] == "api-gui",
            tasks_per_update=v["rollout.tasks_per_update"],
            rollout_workers=v["rollout.workers"],
            replay_capacity=v["replay.capacity"],
            staleness_limit=v["replay.staleness_limit"],
            min_batch_steps=v["replay.min_batch_steps"],
            max_batch_steps=v["replay.max_batch_steps"],
            bc_lr=v["bc.lr"],
            sft_lr=v["sft.lr"],
            sft_weight_decay=v["sft.weight_decay"])

    def manifest(self) -> dict:
        from . import __version__
        return {"config": dict(sorted(self.values.items())),
                "code_version": __version__}

    def write_manifest(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.manifest(), fh, indent=1, sort_keys=True)


def parse_file(path: str) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, raw = line.partition("=")
            values[key.strip()] = raw.strip()
    return values


def _env_overrides() -> dict:
    out = {}
    for name, raw in os.environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower().replace("__", ".")
        out[key] = raw
    return out


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    merged = dict(DEFAULTS)
    raw: dict = {}
    if path is not None:
        raw.update(parse_file(path))
    raw.update(_env_overrides())
    raw.update(overrides or {})
    for key, value in raw.items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = _coerce(key, value)
    _validate(merged)
    return RunConfig(values=merged)


def _validate(values: dict) -> None:
    for key, (lo, hi) in _BOUNDS.items():
        v = values[key]
        if not (lo <= v <= hi):
            raise ConfigError(f"{key}={v} outside [{lo}, {hi}]")
    for key, choices in _CHOICES.items():
        if values[key] not in choices:
            raise ConfigError(f"{key}={values[key]!r} not one of {choices}")
    if values["replay.min_batch_steps"] > values["replay.max_batch_steps"]:
        raise ConfigError("replay.min_batch_steps exceeds replay.max_batch_steps")
