"""YAML config files for worlds and training runs.

Every file carries ``schema_version`` and ``kind`` (``world`` or ``train``);
the remaining top-level keys are the fields of the matching config class.
Unknown keys are errors.
"""

from __future__ import annotations

from pathlib import Path

import yaml

from .core import ConfigError
from .trainer import TrainConfig
from .world import WorldConfig

CONFIG_SCHEMA_VERSION = 1
KINDS = {"world": WorldConfig, "train": TrainConfig}


class ConfigFileError(ConfigError):
    code = "config_file_error"


def parse_config(text: str, kind: str, source: str = "<string>"):
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigFileError(f"{source}: not valid YAML ({exc.__class__.__name__})") from exc
    if not isinstance(doc, dict):
        raise ConfigFileError(f"{source}: top level must be a mapping")
    doc = dict(doc)
    version = doc.pop("schema_version", None)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigFileError(f"{source}: schema_version must be {CONFIG_SCHEMA_VERSION}, got {version!r}",
                              field="schema_version")
    found = doc.pop("kind", None)
    if found != kind:
        raise ConfigFileError(f"{source}: expected kind {kind!r}, got {found!r}", field="kind")
    try:
        return KINDS[kind].from_dict(doc)
    except TypeError as exc:
        raise ConfigFileError(f"{source}: {exc}") from exc


def load_config(path: str | Path, kind: str):
    path = Path(path)
    if not path.is_file():
        raise ConfigFileError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), kind, str(path))


def load_world_config(path: str | Path) -> WorldConfig:
    return load_config(path, "world")


def load_train_config(path: str | Path) -> TrainConfig:
    return load_config(path, "train")


def dump_config(cfg) -> str:
    kind = next(k for k, cls in KINDS.items() if isinstance(cfg, cls))
    body = {"schema_version": CONFIG_SCHEMA_VERSION, "kind": kind}
    body.update(cfg.to_dict())
    return yaml.safe_dump(body, sort_keys=False, default_flow_style=None)
