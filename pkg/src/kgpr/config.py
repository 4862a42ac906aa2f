"""Declarative run configuration shared by every CLI subcommand."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

from .errors import ConfigError


@dataclass
class GraphSection:
    entities: int = 200
    relations: int = 20
    triplets: int = 1000


@dataclass
class LLMSection:
    base_url: str = "http://localhost:8000/v1"
    model: str = "meta-llama/Llama-3.1-8B-Instruct"
    api_key_env: str = "KGPR_LLM_API_KEY"
    instruction: str | None = None
    timeout: float = 60.0
    max_in_flight: int = 4
    fallback_to_template: bool = False


@dataclass
class DatasetSection:
    generator: str = "template"
    neighbors: int = 1
    negatives: int = 1
    mask_slots: list[str] = field(default_factory=lambda: ["head", "tail"])
    cap: int | None = None
    holdout_fraction: float = 0.2
    llm: LLMSection = field(default_factory=LLMSection)


@dataclass
class EncoderSection:
    dim: int = 64
    buckets: int = 32768


@dataclass
class TrainSection:
    epochs: int = 5
    batch: int = 512
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    gamma1: float = 0.5
    gamma2: float = 0.5
    sparse: bool = True
    checkpoint_every: int = 0


@dataclass
class EvalSection:
    k_list: list[int] = field(default_factory=lambda: [1, 2, 5, 10, 20, 40])
    k: int = 10


@dataclass
class RunConfig:
    seed: int = 42
    jobs: int = 1
    graph: GraphSection = field(default_factory=GraphSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _merge(obj: Any, data: dict, where: str) -> None:
    known = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {where}{key!r}")
        current = getattr(obj, key)
        if is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key!r} must be a table")
            _merge(current, value, f"{where}{key}.")
        else:
            setattr(obj, key, value)


def from_dict(data: dict) -> RunConfig:
    cfg = RunConfig()
    _merge(cfg, copy.deepcopy(data), "")
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return from_dict(data)


def override(cfg: RunConfig, dotted: dict[str, Any]) -> RunConfig:
    """Apply ``{"train.lr": 0.1, ...}`` overrides, skipping ``None`` values."""
    for key, value in dotted.items():
        if value is None:
            continue
        *path, leaf = key.split(".")
        target = cfg
        for part in path:
            target = getattr(target, part)
        if not hasattr(target, leaf):
            raise ConfigError(f"unknown config key {key!r}")
        setattr(target, leaf, value)
    return cfg
