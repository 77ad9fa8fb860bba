"""JSON scenario files for the population commands.

A scenario is one JSON object::

    {
      "model":   {"a_max": 30, "n_age": 3000, "r": 0.5, "mu": 1.0, "alpha": 0.5,
                  "birth_law": "B2", "beta": 2.0,
                  "history": {"type": "exponential", "scale": 1.0, "rate": 1.0}},
      "run":     {"t_max": 20, "discard_fraction": 0.5, "snapshot_stride": 0},
      "harvest": {"eta": 0.2, "q": {"type": "separable", "time": 1.0, "age": 1.0}},
      "seed":    0
    }

Rates are constants or tables sampled on the age grid (``n_age + 1`` values;
``beta`` for B1 is a ``(r/dt + 1) x (n_age + 1)`` table). Unknown keys are
rejected.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError
from .population import AgePopulationModel, HarvestInput, ModelConfig, build_model


@dataclass
class RunConfig:
    t_max: float
    discard_fraction: float = 0.5
    snapshot_stride: int = 0


@dataclass
class HarvestConfig:
    eta: object
    q: dict


@dataclass
class ScenarioConfig:
    model: ModelConfig
    run: RunConfig
    harvest: HarvestConfig | None = None
    seed: int = 0


def _only(block, allowed, where):
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(block) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _history(spec):
    if spec is None or isinstance(spec, (int, float, list)):
        return spec
    if isinstance(spec, dict):
        kind = spec.get("type")
        if kind == "zero":
            _only(spec, {"type"}, "history")
            return None
        if kind == "constant":
            _only(spec, {"type", "value"}, "history")
            return float(spec["value"])
        if kind == "exponential":
            _only(spec, {"type", "scale", "rate"}, "history")
            scale, rate = float(spec.get("scale", 1.0)), float(spec.get("rate", 1.0))
            return lambda s, a: scale * np.exp(-rate * a)
        if kind in ("profile", "table"):
            _only(spec, {"type", "values"}, "history")
            return spec["values"]
    raise ConfigError(f"unrecognised history specification {spec!r}")


def parse_scenario(data: dict) -> ScenarioConfig:
    _only(data, {"model", "run", "harvest", "seed"}, "scenario")
    if "model" not in data or "run" not in data:
        raise ConfigError("scenario needs 'model' and 'run' blocks")
    model_keys = {f.name for f in fields(ModelConfig)}
    _only(data["model"], model_keys, "model")
    try:
        model_block = dict(data["model"])
        model_block["history"] = _history(model_block.get("history"))
        model = ModelConfig(**model_block)
    except TypeError as exc:
        raise ConfigError(f"bad model block: {exc}") from exc
    _only(data["run"], {f.name for f in fields(RunConfig)}, "run")
    try:
        run = RunConfig(**data["run"])
    except TypeError as exc:
        raise ConfigError(f"bad run block: {exc}") from exc
    harvest = None
    if data.get("harvest") is not None:
        _only(data["harvest"], {"eta", "q"}, "harvest")
        harvest = HarvestConfig(eta=data["harvest"].get("eta", 0.0), q=data["harvest"].get("q", {}))
        if harvest.eta is not None:
            model.eta = harvest.eta
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return ScenarioConfig(model, run, harvest, seed)


def load_scenario(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(data)


def build_harvest(cfg: HarvestConfig, model: AgePopulationModel, steps: int) -> HarvestInput:
    q = cfg.q
    kind = q.get("type", "separable")
    if kind == "separable":
        _only(q, {"type", "time", "age"}, "harvest.q")
        time_part = np.asarray(q.get("time", 1.0), dtype=float)
        if time_part.ndim == 1 and time_part.shape[0] < steps:
            raise ConfigError(f"harvest time factor needs {steps} samples, got {time_part.shape[0]}")
        if time_part.ndim == 1:
            time_part = time_part[:steps]
        age_part = np.asarray(q.get("age", 1.0), dtype=float)
        if age_part.ndim == 1 and age_part.shape[0] != model.n_age + 1:
            raise ConfigError(f"harvest age factor needs {model.n_age + 1} samples")
        return HarvestInput.separable(model, time_part, age_part, steps)
    if kind == "table":
        _only(q, {"type", "values"}, "harvest.q")
        values = np.asarray(q["values"], dtype=float)
        if values.ndim != 2 or values.shape[0] < steps or values.shape[1] != model.n_age + 1:
            raise ConfigError(f"harvest table must be at least ({steps}, {model.n_age + 1})")
        return HarvestInput(values[:steps])
    raise ConfigError(f"unknown harvest q type {kind!r}")


def scenario_model(cfg: ScenarioConfig) -> AgePopulationModel:
    try:
        return build_model(cfg.model)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
