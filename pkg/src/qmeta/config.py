"""INI-style configuration files for training runs.

Only a ``[training]`` section is recognised and every key must be a
:class:`TrainingConfig` field; anything else is rejected.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import asdict, fields
from pathlib import Path

from .metatrain import PRESETS, TrainingConfig

SECTION = "training"
_TYPES = {f.name: f.type for f in fields(TrainingConfig)}

KEY_DOCS = {
    "n_qubits": "number of qubits N",
    "layers": "HEA layers L",
    "k": "ES samples per step",
    "c_target": "halting success count",
    "t_max": "ES step budget; also normalises the empirical value",
    "sigmas": "comma-separated sampling ranges",
    "etas": "comma-separated learning rates",
    "t_l": "ARS lower repetition",
    "t_u": "ARS upper repetition",
    "T_th": "ARS annealing episodes",
    "instances_per_episode": "Haar states per RL episode",
    "episodes": "number of RL episodes",
    "seed": "master seed",
    "advantage_sign": "standard | literal",
    "lr": "ADAM learning rate",
    "batch_size": "minibatch size",
    "buffer_capacity": "replay capacity",
    "updates_per_episode": "actor-critic updates after each episode",
    "rolling_window": "episodes in the rolling mean used for checkpoint selection",
    "checkpoint_every": "episodes between full checkpoints",
    "select_min_halted": "rolling halt fraction a window needs to be eligible as best checkpoint",
}


class ConfigError(ValueError):
    pass


def _parse_value(key: str, raw: str):
    kind = _TYPES[key]
    raw = raw.strip()
    try:
        if kind == "tuple":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    return raw


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str, base: TrainingConfig | None = None) -> TrainingConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case sensitive (T_th)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    extra = [s for s in cp.sections() if s != SECTION]
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(extra)}")
    values = {}
    if cp.has_section(SECTION):
        for key, raw in cp.items(SECTION):
            if key not in _TYPES:
                raise ConfigError(f"unknown key {key!r} in [{SECTION}]")
            values[key] = _parse_value(key, raw)
    if base is None:
        n = int(values.get("n_qubits", 1))
        base = TrainingConfig.preset(n) if n in PRESETS else TrainingConfig()
    merged = {**asdict(base), **values}
    try:
        return TrainingConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, base: TrainingConfig | None = None) -> TrainingConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base)


def dump_config(cfg: TrainingConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp[SECTION] = {k: _format_value(v) for k, v in asdict(cfg).items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
