"""Run configuration: one JSON file, overridable via PISA_<SECTION>_<KEY>
environment variables, then via command-line flags.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Optional

from . import __version__
from .errors import ConfigError
from .models import Dims, TrainConfig
from .synth import GeneratorConfig

ENV_PREFIX = "PISA_"


@dataclass
class RunSection:
    seed: int = 0
    out_dir: str = "out"
    version: str = __version__


@dataclass
class PathsSection:
    catalog: str = ""
    events: str = ""
    embedding_model: str = ""  # defaults to <out_dir>/embedding_component.model


@dataclass
class SplitSection:
    val_day: Optional[int] = None  # None: second-to-last observed day
    test_day: Optional[int] = None  # None: last observed day


@dataclass
class TrainSection:
    max_epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 0.001
    min_word_freq: int = 1

    def to_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(max_epochs=self.max_epochs, batch_size=self.batch_size,
                           learning_rate=self.learning_rate, seed=seed)


@dataclass
class ExperimentSection:
    protocol: str = "all_data"
    x_list: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
    models: tuple[str, ...] = ("content", "integrated", "baseline")
    workers: int = 1


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    paths: PathsSection = field(default_factory=PathsSection)
    split: SplitSection = field(default_factory=SplitSection)
    dims: Dims = field(default_factory=Dims)
    train: TrainSection = field(default_factory=TrainSection)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)


_SECTION_TYPES = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(section: str, key: str, value, field_type) -> object:
    # tuples arrive as JSON lists; everything else passes through
    if isinstance(value, list):
        return tuple(value)
    return value


def _apply(cfg_obj, section: str, data: dict) -> None:
    valid = {f.name: f for f in dataclasses.fields(cfg_obj)}
    for key, value in data.items():
        if key not in valid:
            raise ConfigError(f"unknown key {key!r} in config section {section!r}")
        setattr(cfg_obj, key, _coerce(section, key, value, valid[key].type))


def _env_overrides() -> dict[str, dict[str, object]]:
    out: dict[str, dict[str, object]] = {}
    sections = {name.upper(): name for name in _SECTION_TYPES}
    for raw_key, raw_value in sorted(os.environ.items()):
        if not raw_key.startswith(ENV_PREFIX):
            continue
        rest = raw_key[len(ENV_PREFIX):]
        section_upper, _, key_upper = rest.partition("_")
        if section_upper not in sections or not key_upper:
            raise ConfigError(f"unrecognized environment override {raw_key!r}")
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value
        out.setdefault(sections[section_upper], {})[key_upper.lower()] = value
    return out


def load_config(path: Optional[str] = None) -> RunConfig:
    """Defaults, then the JSON file, then PISA_* environment overrides."""
    cfg = RunConfig()
    merged: dict[str, dict] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                file_data = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(file_data, dict):
            raise ConfigError("config file must hold a JSON object")
        merged.update({k: dict(v) for k, v in file_data.items()})
    for section, data in _env_overrides().items():
        merged.setdefault(section, {}).update(data)
    for section, data in merged.items():
        if section not in _SECTION_TYPES:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(data, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        if section in ("dims", "generator"):
            # frozen/validated dataclasses rebuild from merged fields
            current = dataclasses.asdict(getattr(cfg, section))
            unknown = set(data) - set(current)
            if unknown:
                raise ConfigError(f"unknown key {unknown.pop()!r} in config "
                                  f"section {section!r}")
            current.update({k: _coerce(section, k, v, None)
                            for k, v in data.items()})
            cls = type(getattr(cfg, section))
            setattr(cfg, section, cls(**current))
        else:
            _apply(getattr(cfg, section), section, data)
    if cfg.run.version != __version__:
        raise ConfigError(f"config version {cfg.run.version!r} does not match "
                          f"tool version {__version__!r}")
    return cfg


def config_to_document(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)
