# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Run configuration files.

A run is described by one JSON document whose keys mirror ``RunConfig``.
``FORESIGHT_SEED`` and ``FORESIGHT_OUT`` in the environment override the
file; command-line flags override both.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Type, TypeVar, Union

from .data import CollectionConfig
from .evaluation import EvalConfig
from .sim import SimConfig
from .tasks import TASKS, Task, make_task
from .training import TrainConfig

ENV_SEED = "FORESIGHT_SEED"
ENV_OUT = "FORESIGHT_OUT"

C = TypeVar("C")


class ConfigError(ValueError):
    """A configuration file or override is invalid."""


def _section(cls: Type[C], values: Optional[Mapping[str, Any]], name: str) -> C:
    values = dict(values or {})
    known = {f.name for f in fields(cls)}  # type: ignore[arg-type]
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError("unknown keys in section {!r}: {}".format(name, ", ".join(unknown)))
    for key, value in values.items():
        # JSON has no tuples
        if isinstance(value, list):
            values[key] = tuple(value)
    return cls(**values)


@dataclass
class RunConfig:
    task: str = "SpreadCloth"
    task_params: Dict[str, Any] = field(default_factory=dict)
    grid: int = 64
    sim: Dict[str, Any] = field(default_factory=dict)
    collection: CollectionConfig = field(default_factory=CollectionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    out: str = "runs/default"
    seed: int = 0

    def sim_config(self) -> SimConfig:
        spacing = float(self.task_params.get("spacing", 0.015))
        overrides = {k: tuple(v) if isinstance(v, list) else v for k, v in self.sim.items()}
        known = {f.name for f in fields(SimConfig)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ConfigError("unknown keys in section 'sim': {}".format(", ".join(unknown)))
        return SimConfig.for_spacing(spacing, **overrides)

    def make_task(self, **overrides: Any) -> Task:
        """The configured task; ``overrides`` replace entries of ``task_params``."""
        params = dict(self.task_params, **overrides)
        params.setdefault("grid", self.grid)
        try:
            return make_task(self.task, sim=self.sim_config(), **params)
        except TypeError as err:
            raise ConfigError("bad task_params for {}: {}".format(self.task, err)) from err

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError("unknown task {!r}; expected one of {}".format(self.task, sorted(TASKS)))
        if self.grid < 16 or self.grid % 16:
            raise ConfigError("grid must be a positive multiple of 16, got {}".format(self.grid))
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        try:
            self.sim_config().validate()
            self.collection.validate()
            self.train.validate()
            self.eval.validate()
        except ValueError as err:
            raise ConfigError(str(err)) from err

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def fingerprint(self) -> str:
        doc = self.to_dict()
        doc.pop("out")
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()

    @property
    def out_dir(self) -> Path:
        return Path(self.out)


def config_from_dict(doc: Mapping[str, Any]) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError("unknown configuration keys: {}".format(", ".join(unknown)))
    values = dict(doc)
    values["collection"] = _section(CollectionConfig, doc.get("collection"), "collection")
    values["train"] = _section(TrainConfig, doc.get("train"), "train")
    values["eval"] = _section(EvalConfig, doc.get("eval"), "eval")
    try:
        return RunConfig(**values)
    except TypeError as err:
        raise ConfigError(str(err)) from err


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Read a run configuration; defaults when ``path`` is ``None``."""
    if path is None:
        return RunConfig()
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as err:
        raise ConfigError("{} is not valid JSON: {}".format(path, err)) from err
    if not isinstance(doc, dict):
        raise ConfigError("{} must hold a JSON object".format(path))
    return config_from_dict(doc)


def apply_overrides(
    cfg: RunConfig,
    environ: Optional[Mapping[str, str]] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None,
) -> RunConfig:
    """Environment overrides first, then explicit (command-line) values."""
    environ = os.environ if environ is None else environ
    if ENV_SEED in environ:
        try:
            cfg = replace(cfg, seed=int(environ[ENV_SEED]))
        except ValueError as err:
            raise ConfigError("{} must be an integer".format(ENV_SEED)) from err
    if ENV_OUT in environ:
        cfg = replace(cfg, out=environ[ENV_OUT])
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if out is not None:
        cfg = replace(cfg, out=out)
    return cfg
