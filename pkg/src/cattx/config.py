"""YAML run configuration.

A run config may contain the sections ``sim``, ``policy``, ``predictor`` and
``scenario`` (a path or an inline scenario). File paths inside the config are
resolved relative to the config file. Example::

    sim:
      tick_s: 1.0
      sensor_rate_Bps: 10000
      seed: 42
    policy:
      kind: cat                 # or: periodic (with interval_s)
      alpha: 2.0
      t_min: 10.0
      t_max: 120.0
      metric: {kind: predicted_rate, rate_max: 50.0}
    model: model.json           # required by the predicted_rate metric
    map: map.json               # optional map-knowledge feature source
    predictor:
      min_leaf: 8
      max_depth: 12
      linear_leaves: true
      min_sdr_gain: 0.05
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .cat import CatParams, CatPolicy, PeriodicPolicy, TransmissionPolicy
from .metrics import metric_from_dict
from .predictor import TreeParams


class ConfigError(ValueError):
    pass


def load_yaml(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def policy_from_dict(data: dict) -> TransmissionPolicy:
    kind = data.get("kind")
    try:
        if kind == "periodic":
            return PeriodicPolicy(float(data["interval_s"]))
        if kind == "cat":
            params = CatParams(
                alpha=float(data.get("alpha", 2.0)),
                t_min=float(data.get("t_min", 10.0)),
                t_max=float(data.get("t_max", 120.0)),
            )
            return CatPolicy(metric_from_dict(data.get("metric") or {}), params)
    except KeyError as exc:
        raise ConfigError(f"policy is missing {exc}") from None
    raise ConfigError(f"unknown policy kind {kind!r}")


def tree_params_from_dict(data: Optional[dict]) -> TreeParams:
    data = dict(data or {})
    unknown = set(data) - {"min_leaf", "max_depth", "linear_leaves", "min_sdr_gain"}
    if unknown:
        raise ConfigError(f"unknown predictor parameters {sorted(unknown)}")
    return TreeParams(
        min_leaf=int(data.get("min_leaf", 8)),
        max_depth=int(data.get("max_depth", 12)),
        linear_leaves=bool(data.get("linear_leaves", True)),
        min_sdr_gain=float(data.get("min_sdr_gain", 0.05)),
    )


@dataclass
class RunConfig:
    tick_s: float = 1.0
    sensor_rate_Bps: float = 10_000.0
    seed: int = 0
    policy: Optional[TransmissionPolicy] = None
    tree_params: TreeParams = field(default_factory=TreeParams)
    model_path: Optional[Path] = None
    map_path: Optional[Path] = None


def _resolve(base: Path, value: Any) -> Optional[Path]:
    if value is None:
        return None
    p = Path(str(value))
    return p if p.is_absolute() else base / p


def load_run_config(path) -> RunConfig:
    path = Path(path)
    data = load_yaml(path)
    sim = data.get("sim") or {}
    cfg = RunConfig(
        tick_s=float(sim.get("tick_s", 1.0)),
        sensor_rate_Bps=float(sim.get("sensor_rate_Bps", 10_000.0)),
        seed=int(sim.get("seed", 0)),
        policy=policy_from_dict(data["policy"]) if "policy" in data else None,
        tree_params=tree_params_from_dict(data.get("predictor")),
        model_path=_resolve(path.parent, data.get("model")),
        map_path=_resolve(path.parent, data.get("map")),
    )
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if not cfg.tick_s > 0:
        raise ConfigError("sim.tick_s must be > 0")
    if not cfg.sensor_rate_Bps > 0:
        raise ConfigError("sim.sensor_rate_Bps must be > 0")
    for label, p in (("model", cfg.model_path), ("map", cfg.map_path)):
        if p is not None and not p.exists():
            raise ConfigError(f"{label} file {p} does not exist")
