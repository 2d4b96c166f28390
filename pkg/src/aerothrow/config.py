"""Scenario configuration: nested dataclasses loaded from JSON or TOML with strict keys."""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .disturbance import RateLoopConfig
from .errors import InvalidConfigError
from .model import VehicleParams
from .nmpc import NmpcConfig
from .planner import PlannerConfig

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

TRIGGER_MODES = ("nominal", "reassess")
ABLATIONS = ("none", "ndob", "indi", "full")


@dataclass
class ObserverConfig:
    c: float = 40.0
    f_cut: float = 50.0

    def validate(self):
        if self.c <= 0 or self.f_cut <= 0:
            raise InvalidConfigError("observer gain and cutoff must be positive")
        return self


@dataclass
class PayloadConfig:
    mass: float = 0.2
    offset: tuple = (0.0, 0.05, -0.2)  # body-frame attachment point; off-axis, so the payload exerts a moment

    def validate(self):
        if self.mass < 0:
            raise InvalidConfigError("payload mass must be non-negative")
        if len(self.offset) != 3:
            raise InvalidConfigError("payload offset must be a 3-vector")
        return self


@dataclass
class NoiseConfig:
    accel_std: float = 0.05
    gyro_std: float = 0.005
    pos_std: float = 0.002
    vel_std: float = 0.005
    rotor_std: float = 0.0

    def validate(self):
        if min(self.accel_std, self.gyro_std, self.pos_std, self.vel_std, self.rotor_std) < 0:
            raise InvalidConfigError("noise levels must be non-negative")
        return self


@dataclass
class RatesConfig:
    sim_hz: int = 1000
    sensor_hz: int = 500
    control_hz: int = 100

    def validate(self):
        if not (self.sim_hz % self.sensor_hz == 0 and self.sim_hz % self.control_hz == 0
                and self.sensor_hz % self.control_hz == 0):
            raise InvalidConfigError("rates must divide each other (sim, sensor, control)")
        if self.sim_hz < 500:
            raise InvalidConfigError("simulation step must not exceed 2 ms")
        return self


@dataclass
class ScenarioConfig:
    scenario_id: str = "scenario"
    description: str = ""
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    nmpc: NmpcConfig = field(default_factory=NmpcConfig)
    observer: ObserverConfig = field(default_factory=ObserverConfig)
    rate_loop: RateLoopConfig = field(default_factory=RateLoopConfig)
    payload: PayloadConfig = field(default_factory=PayloadConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    rates: RatesConfig = field(default_factory=RatesConfig)
    actuator_delay: float = 0.0
    delay_compensation: float = 0.0
    trigger: str = "nominal"
    ablation: str = "full"
    seed: int = 0
    pre_hover: float = 1.0
    timeout: float = 30.0
    return_tolerance: float = 0.05
    reference_v_release: float = float("nan")   # documented target values of the analog scenario
    reference_a_max: float = float("nan")

    def validate(self):
        if self.trigger not in TRIGGER_MODES:
            raise InvalidConfigError(f"trigger must be one of {TRIGGER_MODES}")
        if self.ablation not in ABLATIONS:
            raise InvalidConfigError(f"ablation must be one of {ABLATIONS}")
        if self.actuator_delay < 0 or self.delay_compensation < 0:
            raise InvalidConfigError("delays must be non-negative")
        if self.pre_hover < 0 or self.timeout <= 0:
            raise InvalidConfigError("invalid timing")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidConfigError("seed must fit in an unsigned 64-bit integer")
        self.vehicle.validate()
        self.planner.validate()
        self.nmpc.validate()
        self.observer.validate()
        self.rate_loop.validate()
        self.payload.validate()
        self.noise.validate()
        self.rates.validate()
        if abs(self.rate_loop.f_s - self.rates.sensor_hz) > 1e-9:
            raise InvalidConfigError("rate loop must run at the sensor rate")
        ratio = self.nmpc.dt * self.rates.control_hz
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise InvalidConfigError("NMPC step must be a multiple of the control period")
        return self

    @property
    def uses_ndob(self) -> bool:
        return self.ablation in ("ndob", "full")

    @property
    def uses_indi(self) -> bool:
        return self.ablation in ("indi", "full")

    def with_(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes).validate()

    def to_dict(self) -> dict:
        return _to_plain(self)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.init}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise InvalidConfigError(f"{path}: expected a table")
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    unknown = set(data) - set(fields)
    if unknown:
        raise InvalidConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get(name) if cls is ScenarioConfig else None
        if sub is not None:
            kwargs[name] = _build(sub, value, f"{path}.{name}")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidConfigError(f"{path}: {exc}") from exc


_NESTED = {
    "vehicle": VehicleParams, "planner": PlannerConfig, "nmpc": NmpcConfig,
    "observer": ObserverConfig, "rate_loop": RateLoopConfig, "payload": PayloadConfig,
    "noise": NoiseConfig, "rates": RatesConfig,
}


def scenario_from_dict(data: dict) -> ScenarioConfig:
    data = dict(data)
    veh = data.get("vehicle")
    if isinstance(veh, dict) and "inertia" in veh:
        veh = dict(veh)
        veh["inertia"] = np.asarray(veh["inertia"], dtype=float)
        data["vehicle"] = veh
    cfg = _build(ScenarioConfig, data, "scenario")
    if isinstance(cfg.vehicle.inertia, tuple):
        cfg.vehicle.inertia = np.asarray(cfg.vehicle.inertia, dtype=float)
    return cfg.validate()


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InvalidConfigError(f"cannot read scenario {path}: {exc}") from exc
    if path.suffix.lower() == ".toml":
        data = tomllib.loads(raw.decode())
    else:
        data = json.loads(raw)
    return scenario_from_dict(data)


def bundled_scenarios() -> dict:
    """Scenario files shipped with the package, keyed by file stem."""
    root = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(root.glob("*.json"))}


def bundled(name: str) -> ScenarioConfig:
    files = bundled_scenarios()
    if name not in files:
        raise InvalidConfigError(f"no bundled scenario {name!r}; have {sorted(files)}")
    return load_scenario(files[name])
