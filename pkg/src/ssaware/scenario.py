"""Declarative scenario configuration (YAML) and its validation."""

from __future__ import annotations

import hashlib
import math
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

Vec3 = tuple[float, float, float]


class ConfigError(ValueError):
    """Scenario file could not be parsed or failed validation."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Waypoint(_Strict):
    t: float = Field(ge=0.0)
    speed: float = Field(ge=0.0)
    heading: Optional[float] = None


class Fov(_Strict):
    range: float = Field(gt=0.0)
    half_angle: float = Field(gt=0.0, le=math.pi)


class ActorConfig(_Strict):
    id: str
    role: Literal["ego", "sender", "passive", "obstacle"]
    cls: Literal["vehicle", "pedestrian", "unknown"] = Field(alias="class")
    pose: tuple[float, float, float]
    length: float = Field(gt=0.0)
    width: float = Field(gt=0.0)
    station_id: Optional[int] = Field(default=None, ge=0, lt=2**32)
    station_type: Literal["vehicle", "rsu"] = "vehicle"
    static: bool = False
    process_noise: bool = True
    fov: Optional[Fov] = None
    ref_point_offset: tuple[float, float] = (0.0, 0.0)
    profile: list[Waypoint] = Field(default_factory=list)

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    @model_validator(mode="after")
    def _sensing_needs_fov(self):
        if self.role in ("ego", "sender") and self.fov is None:
            raise ValueError(f"actor {self.id!r} with role {self.role!r} needs a fov")
        if self.role == "sender" and self.station_id is None:
            raise ValueError(f"sender {self.id!r} needs a station_id")
        times = [w.t for w in self.profile]
        if times != sorted(times):
            raise ValueError(f"profile waypoints of {self.id!r} must be sorted by t")
        return self


class ObstacleConfig(_Strict):
    x: float
    y: float
    length: float = Field(gt=0.0)
    width: float = Field(gt=0.0)
    heading: float = 0.0


class NoiseConfig(_Strict):
    process: Vec3 = (0.05, 0.05, 0.02)
    local: Vec3 = (0.3, 0.3, 0.2)
    external: Vec3 = (0.5, 0.5, 0.3)
    truth_process_fraction: float = Field(default=1.0, ge=0.0, le=1.0)

    @field_validator("process", "local", "external")
    @classmethod
    def _nonnegative(cls, v):
        if min(v) < 0:
            raise ValueError("noise bounds must be nonnegative")
        return v


class ChannelSection(_Strict):
    drop_probability: float = Field(default=0.1, ge=0.0, le=1.0)
    latency_min: float = Field(default=10.0, ge=0.0)
    latency_max: float = Field(default=50.0, ge=0.0)
    range: float = Field(default=300.0, ge=0.0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.latency_min > self.latency_max:
            raise ValueError("latency_min must not exceed latency_max")
        return self


class AwarenessConfig(_Strict):
    gate: float = Field(default=3.0, gt=0.0)
    retire_after: float = Field(default=2.0, gt=0.0)


class InitialRadii(_Strict):
    vehicle: Vec3 = (2.0, 2.0, 1.0)
    pedestrian: Vec3 = (1.0, 1.0, 0.8)
    unknown: Vec3 = (2.0, 2.0, 1.0)


class ScenarioConfig(_Strict):
    name: str = "scenario"
    duration: float = Field(gt=0.0)
    tick_rate: float = Field(default=10.0, gt=0.0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    generator_budget: int = Field(default=20, ge=3)
    noise: NoiseConfig = NoiseConfig()
    channel: ChannelSection = ChannelSection()
    awareness: AwarenessConfig = AwarenessConfig()
    initial_radii: InitialRadii = InitialRadii()
    obstacles: list[ObstacleConfig] = Field(default_factory=list)
    actors: list[ActorConfig]

    @model_validator(mode="after")
    def _actors(self):
        ids = [a.id for a in self.actors]
        if len(set(ids)) != len(ids):
            raise ValueError("actor ids must be unique")
        if sum(a.role == "ego" for a in self.actors) != 1:
            raise ValueError("exactly one actor must have role 'ego'")
        stations = [a.station_id for a in self.actors if a.station_id is not None]
        if len(set(stations)) != len(stations):
            raise ValueError("station ids must be unique")
        return self

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate

    @property
    def ticks(self) -> int:
        return int(math.floor(self.duration * self.tick_rate + 1e-9)) + 1

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return self.model_copy(update={"seed": int(seed)})


def _error_text(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def parse_scenario(text: str) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("parse error: top level must be a mapping")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"validation error: {_error_text(exc)}") from exc


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("ssaware") / "scenarios" / f"{name}.yaml"))


def bundled_names() -> list[str]:
    return sorted(p.stem for p in Path(str(resources.files("ssaware") / "scenarios")).glob("*.yaml"))


def resolve(path_or_name) -> Path:
    p = Path(path_or_name)
    if p.exists():
        return p
    if str(path_or_name) in bundled_names():
        return bundled_path(str(path_or_name))
    raise ConfigError(f"scenario {path_or_name!r} is neither a file nor a bundled scenario ({', '.join(bundled_names())})")


def load_scenario(path_or_name) -> ScenarioConfig:
    return parse_scenario(resolve(path_or_name).read_text())


def dump_scenario(cfg: ScenarioConfig) -> str:
    data = cfg.model_dump(mode="json", by_alias=True)
    return yaml.safe_dump(data, sort_keys=False)


def config_digest(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(dump_scenario(cfg).encode()).hexdigest()
