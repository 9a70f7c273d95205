"""Run configuration: one JSON tree covering every pipeline stage.

Unknown keys are rejected so typos fail loudly; the resolved tree serializes
canonically, which makes the config hash in the run manifest stable.  Monte
Carlo parameter paths (``"fd.jam_density"``) address leaves of this tree.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .environment import EnvModifierConfig
from .errors import ConfigError
from .fatigue import ClassWeights, SNCurve
from .forest import ForestConfig
from .ingestion import DemandProfile, SegmentConfig, VehicleClass
from .reliability import ResistanceModel
from .traffic import FundamentalDiagram, SolverConfig

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DemandConfig:
    """Demand profile in config form; the car fraction is derived."""

    base_rate: float = 0.5
    peak_rate: float = 2.0
    peak_start: float = 300.0
    peak_end: float = 600.0
    truck_fraction: float = 0.10
    bus_fraction: float = 0.05
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.truck_fraction < 0 or self.bus_fraction < 0:
            raise ConfigError("class fractions must be >= 0")
        if self.truck_fraction + self.bus_fraction > 1.0 + 1e-9:
            raise ConfigError("truck_fraction + bus_fraction must not exceed 1")

    def to_profile(self) -> DemandProfile:
        car = 1.0 - self.truck_fraction - self.bus_fraction
        return DemandProfile(
            base_rate=self.base_rate,
            peak_rate=self.peak_rate,
            peak_start=self.peak_start,
            peak_end=self.peak_end,
            class_mix={
                VehicleClass.CAR: car,
                VehicleClass.TRUCK: self.truck_fraction,
                VehicleClass.BUS: self.bus_fraction,
            },
            scale=self.scale,
        )


@dataclass(frozen=True)
class DistributionSpec:
    """One sampled parameter: path into the config tree plus its distribution."""

    name: str
    kind: str  # fixed | normal | uniform | lognormal
    params: tuple[float, ...] = ()
    truncation: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        arity = {"fixed": 1, "normal": 2, "uniform": 2, "lognormal": 2}
        if self.kind not in arity:
            raise ConfigError(f"unknown distribution kind {self.kind!r}")
        if len(self.params) != arity[self.kind]:
            raise ConfigError(
                f"distribution {self.name!r} ({self.kind}) needs "
                f"{arity[self.kind]} parameters, got {len(self.params)}"
            )
        if self.kind == "uniform" and not self.params[0] < self.params[1]:
            raise ConfigError(f"uniform bounds must satisfy a < b for {self.name!r}")
        if self.kind in ("normal", "lognormal") and self.params[1] < 0:
            raise ConfigError(f"sigma must be >= 0 for {self.name!r}")
        if self.truncation is not None and not self.truncation[0] < self.truncation[1]:
            raise ConfigError(f"truncation bounds must satisfy lo < hi for {self.name!r}")


def default_distributions() -> tuple[DistributionSpec, ...]:
    """Sampled parameters of the stock Monte Carlo scenario."""
    return (
        DistributionSpec("demand.scale", "lognormal", (0.0, 0.25)),
        DistributionSpec("fd.free_flow_speed", "normal", (16.7, 1.0), truncation=(10.0, 25.0)),
        DistributionSpec("fd.jam_density", "uniform", (0.10, 0.14)),
        DistributionSpec("demand.truck_fraction", "uniform", (0.1, 0.3)),
        DistributionSpec("env.freeze_thaw_weight", "uniform", (0.07, 0.13)),
        DistributionSpec("env.rain_weight", "uniform", (0.105, 0.195)),
        DistributionSpec("env.wind_weight", "uniform", (0.07, 0.13)),
    )


@dataclass(frozen=True)
class McSection:
    n_replicates: int = 1000
    master_seed: int = 42
    duration: float = 900.0
    distributions: tuple[DistributionSpec, ...] = field(default_factory=default_distributions)

    def __post_init__(self) -> None:
        if self.n_replicates < 1:
            raise ConfigError(f"n_replicates must be >= 1, got {self.n_replicates}")
        if self.duration <= 0:
            raise ConfigError(f"mc duration must be > 0, got {self.duration}")


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    segment: SegmentConfig = field(default_factory=SegmentConfig)
    fd: FundamentalDiagram = field(default_factory=FundamentalDiagram)
    solver: SolverConfig = field(default_factory=SolverConfig)
    env: EnvModifierConfig = field(default_factory=EnvModifierConfig)
    class_weights: ClassWeights = field(default_factory=ClassWeights)
    sn: SNCurve = field(default_factory=SNCurve)
    damage_ref: float = 1.0
    resistance: ResistanceModel = field(default_factory=ResistanceModel)
    reliability_window: float = 3600.0
    frame_interval: int = 1
    duration: float = 900.0
    feature_window: float = 300.0
    demand: DemandConfig = field(default_factory=DemandConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    mc: McSection = field(default_factory=McSection)

    def __post_init__(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema_version {self.schema_version}, expected {SCHEMA_VERSION}"
            )
        if self.damage_ref <= 0:
            raise ConfigError(f"damage_ref must be > 0, got {self.damage_ref}")
        if self.reliability_window <= 0:
            raise ConfigError("reliability_window must be > 0")
        if self.frame_interval < 1:
            raise ConfigError("frame_interval must be >= 1 second")
        if self.duration <= 0:
            raise ConfigError(f"duration must be > 0, got {self.duration}")
        if self.feature_window <= 0:
            raise ConfigError("feature_window must be > 0")


_SECTION_TYPES = {
    "segment": SegmentConfig,
    "fd": FundamentalDiagram,
    "solver": SolverConfig,
    "env": EnvModifierConfig,
    "class_weights": ClassWeights,
    "sn": SNCurve,
    "resistance": ResistanceModel,
    "demand": DemandConfig,
    "forest": ForestConfig,
    "mc": McSection,
}


def _build_section(cls: type, data: Any, path: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"section {path!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {path!r}: {sorted(unknown)}")
    kwargs = dict(data)
    if cls is McSection and "distributions" in kwargs:
        kwargs["distributions"] = tuple(
            _build_distribution(d, f"{path}.distributions[{i}]")
            for i, d in enumerate(kwargs["distributions"])
        )
    return cls(**kwargs)


def _build_distribution(data: Any, path: str) -> DistributionSpec:
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be an object")
    known = {"name", "kind", "params", "truncation"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {path}: {sorted(unknown)}")
    try:
        return DistributionSpec(
            name=data["name"],
            kind=data["kind"],
            params=tuple(float(v) for v in data.get("params", ())),
            truncation=tuple(data["truncation"]) if data.get("truncation") is not None else None,
        )
    except KeyError as exc:
        raise ConfigError(f"{path} is missing key {exc}") from None


def config_from_dict(data: dict) -> RunConfig:
    """Build a validated RunConfig, rejecting unknown keys anywhere in the tree."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTION_TYPES:
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, key)
        else:
            kwargs[key] = value
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def config_to_dict(cfg: RunConfig) -> dict:
    def section(obj: Any) -> dict:
        return {f.name: getattr(obj, f.name) for f in fields(obj)}

    out: dict[str, Any] = {"schema_version": cfg.schema_version}
    for name in ("segment", "fd", "solver", "env", "class_weights", "sn", "resistance",
                 "demand", "forest"):
        out[name] = section(getattr(cfg, name))
    out["damage_ref"] = cfg.damage_ref
    out["reliability_window"] = cfg.reliability_window
    out["frame_interval"] = cfg.frame_interval
    out["duration"] = cfg.duration
    out["feature_window"] = cfg.feature_window
    mc = section(cfg.mc)
    mc["distributions"] = [
        {
            "name": d.name,
            "kind": d.kind,
            "params": list(d.params),
            "truncation": list(d.truncation) if d.truncation is not None else None,
        }
        for d in cfg.mc.distributions
    ]
    out["mc"] = mc
    return out


def load_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc.msg} (line {exc.lineno})") from None
    return config_from_dict(data)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(canonical_json(cfg), encoding="utf-8")


def canonical_json(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), sort_keys=True, indent=2) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()


def set_by_path(tree: dict, path: str, value: Any) -> None:
    """Assign a leaf of a nested config dict addressed as ``"section.field"``."""
    parts = path.split(".")
    node = tree
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"parameter path {path!r} does not resolve")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"parameter path {path!r} does not resolve")
    if isinstance(node[leaf], (dict, list)):
        raise ConfigError(f"parameter path {path!r} does not address a scalar")
    node[leaf] = value
