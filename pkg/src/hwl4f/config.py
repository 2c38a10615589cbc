"""Experiment configuration: YAML file -> validated, hashable dataclasses.

Example::

    device:
      preset: calibrated        # or transparent; other keys override it
      camera: {noise_sigma: 0.1}
    hyper: {learning_rate: 0.001, K: 8, epochs: 30}
    algo: {algorithm: pepita}
    data:
      images: ../data/mnist/mnist5k-images-idx3-ubyte
      labels: ../data/mnist/mnist5k-labels-idx1-ubyte
      seeds: [0, 1, 2, 3, 4]
    backend: device
    output_dir: runs/pepita

Unknown keys anywhere raise :class:`ConfigError`.  Relative data paths are
resolved against the config file's directory.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .model import Hyperparams
from .optics import (CameraConfig, DeviceConfig, SlmConfig, calibrated_config,
                     transparent_config)
from .trainers import AlgoConfig


class ConfigError(ValueError):
    pass


BACKENDS = ("device", "software", "oracle")
DEVICE_PRESETS = {"calibrated": calibrated_config, "transparent": transparent_config}


@dataclass(frozen=True)
class DataConfig:
    source: str = "idx"          # idx | synthetic
    images: str | None = None
    labels: str | None = None
    train_n: int = 600
    test_n: int = 100
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    synthetic_count: int = 2000

    def __post_init__(self):
        if self.source not in ("idx", "synthetic"):
            raise ConfigError(f"data.source must be 'idx' or 'synthetic', got {self.source!r}")
        if self.source == "idx" and (not self.images or not self.labels):
            raise ConfigError("data.images and data.labels are required for IDX data")
        if self.train_n <= 0 or self.test_n <= 0:
            raise ConfigError("split sizes must be positive")
        if not self.seeds:
            raise ConfigError("data.seeds must not be empty")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


@dataclass(frozen=True)
class ExperimentConfig:
    device: DeviceConfig = field(default_factory=calibrated_config)
    hyper: Hyperparams = field(default_factory=Hyperparams)
    algo: AlgoConfig = field(default_factory=AlgoConfig)
    data: DataConfig = field(default_factory=lambda: DataConfig(source="synthetic"))
    backend: str = "device"
    output_dir: str = "runs"

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def config_hash(self) -> str:
        """sha256 of the canonical JSON of every field except output_dir."""
        doc = self.to_dict()
        doc.pop("output_dir")
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, doc: Any, where: str):
    """Instantiate dataclass ``cls`` from a mapping, rejecting unknown keys."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in doc.items():
        if name in _NESTED.get(cls, {}):
            value = _build(_NESTED[cls][name], value, f"{where}.{name}")
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_NESTED = {DeviceConfig: {"slm1": SlmConfig, "slm2": SlmConfig, "camera": CameraConfig}}


def _device_from(doc) -> DeviceConfig:
    if doc is None:
        return calibrated_config()
    if isinstance(doc, str):
        doc = {"preset": doc}
    doc = dict(doc)
    preset = doc.pop("preset", None)
    if preset is None:
        return _build(DeviceConfig, doc, "device")
    if preset not in DEVICE_PRESETS:
        raise ConfigError(f"unknown device preset {preset!r}")
    base = _plain(dataclasses.asdict(DEVICE_PRESETS[preset]()))
    for key, value in doc.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            base[key] = {**base[key], **value}
        else:
            base[key] = value
    return _build(DeviceConfig, base, "device")


def config_from_dict(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    kwargs: dict[str, Any] = {"device": _device_from(doc.get("device"))}
    if "hyper" in doc:
        kwargs["hyper"] = _build(Hyperparams, doc["hyper"], "hyper")
    if "algo" in doc:
        kwargs["algo"] = _build(AlgoConfig, doc["algo"], "algo")
    if "data" in doc:
        data = dict(doc["data"])
        if base_dir is not None:
            for key in ("images", "labels"):
                if data.get(key):
                    p = Path(data[key])
                    data[key] = str(p if p.is_absolute() else (base_dir / p).resolve())
        kwargs["data"] = _build(DataConfig, data, "data")
    for key in ("backend", "output_dir"):
        if key in doc:
            kwargs[key] = doc[key]
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(doc or {}, base_dir=path.parent)
