"""``key = value`` configuration files with dotted namespaces.

Recognised namespaces::

    train.<TrainConfig field>     e.g. train.lr = 0.001
    model.<ModelConfig field>     e.g. model.hidden_dim = 32
    synth.<SynthConfig field>     e.g. synth.num_subjects = 8
    data.window                   window length T in samples
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .data import SynthConfig
from .errors import ConfigError
from .model import ModelConfig
from .train import TrainConfig

DATA_KEYS = {"window": 200}

_SECTIONS = {
    "train": TrainConfig,
    "model": ModelConfig,
    "synth": SynthConfig,
}
_SKIP = {"train": {"model"}, "synth": {"bands"}}


def _field_types(cls, skip=()):
    return {f.name: type(f.default) for f in dataclasses.fields(cls)
            if f.name not in skip and f.default is not dataclasses.MISSING}


def known_keys() -> dict:
    keys = {}
    for sect, cls in _SECTIONS.items():
        for name, typ in _field_types(cls, _SKIP.get(sect, ())).items():
            keys[f"{sect}.{name}"] = typ
    for name, default in DATA_KEYS.items():
        keys[f"data.{name}"] = type(default)
    return keys


def _coerce(raw: str, typ):
    if typ is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    return raw


def parse_config(text: str, source="<config>") -> dict:
    """Parse into ``{dotted_key: typed value}``; rejects unknown keys."""
    keys = known_keys()
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value': {line.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in keys:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}: {line.strip()!r}")
        try:
            out[key] = _coerce(raw, keys[key])
        except ValueError as e:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {e}") from None
    return out


def load_config(path) -> dict:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def _section(values: dict, sect: str) -> dict:
    pre = sect + "."
    return {k[len(pre):]: v for k, v in values.items() if k.startswith(pre)}


def build_model_config(values: dict, base: ModelConfig | None = None) -> ModelConfig:
    return dataclasses.replace(base or ModelConfig(), **_section(values, "model"))


def build_train_config(values: dict) -> TrainConfig:
    return TrainConfig(**_section(values, "train"), model=build_model_config(values))


def build_synth_config(values: dict) -> SynthConfig:
    return SynthConfig(**_section(values, "synth"))


def window_length(values: dict) -> int:
    return int(values.get("data.window", DATA_KEYS["window"]))


def format_pairs(pairs) -> str:
    """Render ``key = value`` lines (floats via repr so they round-trip)."""
    lines = []
    for k, v in pairs:
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
