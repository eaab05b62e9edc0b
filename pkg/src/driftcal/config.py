"""Flat key-value config files for the CLI.

Format: one `key = value` per line, `#` comments, blank lines ignored.
Unknown keys are hard errors so ablation typos cannot pass silently.
The DRIFTCAL_SEED environment variable overrides any configured seed.
"""

import os
from dataclasses import dataclass

from .errors import ConfigError
from .synth import SynthConfig

METHODS = ("uncalibrated", "ts", "rc", "dats", "per_task_oracle")
BASELINE_LOSSES = ("nll", "brier")


@dataclass(frozen=True)
class RunConfig:
    stream: str
    out_dir: str
    method: str = "dats"
    threshold: float = 0.6
    reserve_fraction: float = 0.2
    bins: int = 10
    seed: int = 0
    baseline_loss: str = "nll"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (0.0 < self.threshold <= 1.0):
            raise ConfigError(f"threshold must be in (0, 1], got {self.threshold}")
        if not (0.0 < self.reserve_fraction <= 1.0):
            raise ConfigError(f"reserve_fraction must be in (0, 1], got {self.reserve_fraction}")
        if self.bins < 1:
            raise ConfigError(f"bins must be >= 1, got {self.bins}")
        if self.baseline_loss not in BASELINE_LOSSES:
            raise ConfigError(f"baseline_loss must be one of {BASELINE_LOSSES}")


def parse_kv_file(path):
    pairs = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for line_no, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {text!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{path}:{line_no}: empty key or value")
        if key in pairs:
            raise ConfigError(f"{path}:{line_no}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def _convert(path, key, value, kind):
    try:
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        if kind == "float_list":
            return tuple(float(v.strip()) for v in value.split(",") if v.strip())
        return value
    except ValueError as exc:
        raise ConfigError(f"{path}: key {key!r}: cannot parse {value!r} as {kind}") from exc


def _apply_schema(path, pairs, schema):
    unknown = set(pairs) - set(schema)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    out = {}
    for key, (kind, required, default) in schema.items():
        if key in pairs:
            out[key] = _convert(path, key, pairs[key], kind)
        elif required:
            raise ConfigError(f"{path}: missing required key {key!r}")
        else:
            out[key] = default
    return out


_RUN_SCHEMA = {
    "stream": (str, True, None),
    "out_dir": (str, True, None),
    "method": (str, False, "dats"),
    "threshold": (float, False, 0.6),
    "reserve_fraction": (float, False, 0.2),
    "bins": (int, False, 10),
    "seed": (int, False, 0),
    "baseline_loss": (str, False, "nll"),
}

_SYNTH_SCHEMA = {
    "out_dir": (str, True, None),
    "n_tasks": (int, True, None),
    "classes_per_task": (int, True, None),
    "samples_per_class_val": (int, True, None),
    "samples_per_class_test": (int, False, 0),
    "embedding_dim": (int, True, None),
    "cluster_separation": (float, True, None),
    "true_temperature_per_task": ("float_list", True, None),
    "forgetting_noise_per_task": ("float_list", False, None),
    "seed": (int, False, 0),
    "stream_id": (str, False, "synthetic"),
    "task_layout": (str, False, "grouped"),
    "confidence_target_per_task": ("float_list", False, None),
}


def _seed_override(seed):
    env = os.environ.get("DRIFTCAL_SEED")
    if env is None:
        return seed
    try:
        return int(env)
    except ValueError as exc:
        raise ConfigError(f"DRIFTCAL_SEED must be an integer, got {env!r}") from exc


def load_run_config(path, method_override=None):
    values = _apply_schema(path, parse_kv_file(path), _RUN_SCHEMA)
    if method_override is not None:
        values["method"] = method_override
    values["seed"] = _seed_override(values["seed"])
    try:
        return RunConfig(**values)
    except ConfigError:
        raise
    except Exception as exc:  # dataclass-level validation
        raise ConfigError(str(exc)) from exc


def load_synth_config(path):
    values = _apply_schema(path, parse_kv_file(path), _SYNTH_SCHEMA)
    out_dir = values.pop("out_dir")
    stream_id = values.pop("stream_id")
    values["seed"] = _seed_override(values["seed"])
    if values["forgetting_noise_per_task"] is None:
        values["forgetting_noise_per_task"] = tuple(0.0 for _ in range(values["n_tasks"]))
    try:
        cfg = SynthConfig(**values)
    except Exception as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, out_dir, stream_id
