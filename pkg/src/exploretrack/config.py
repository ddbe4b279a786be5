"""Scenario configuration: dataclasses plus a YAML loader that reports line numbers."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .phd import SensorModel

SCENARIO_DIR = Path(__file__).parent / "scenarios"
MODES = ("full", "voronoi-unweighted", "coverage-only", "tracking-only")


class ScenarioError(ValueError):
    """Invalid scenario file; the message carries ``path:line``."""


@dataclass
class SensorConfig:
    range: float = 12.0
    p_detect: float = 0.8
    # measurement covariance figure and whether it is a per-axis variance or std
    meas_cov: float = 0.25
    meas_cov_units: str = "variance"
    clutter_rate: float = 0.5

    @property
    def meas_std(self) -> float:
        if self.meas_cov_units == "variance":
            return math.sqrt(self.meas_cov)
        if self.meas_cov_units == "std":
            return self.meas_cov
        raise ValueError(f"meas_cov_units must be 'variance' or 'std', got {self.meas_cov_units!r}")

    def model(self) -> SensorModel:
        return SensorModel(self.range, self.p_detect, self.meas_std, self.clutter_rate)


@dataclass
class PhdConfig:
    p_survive: float = 0.99
    birth_mass: float = 0.05
    init_intensity: float = 0.002
    motion_std: float | None = None  # None: target_speed_max * dt


@dataclass
class TargetConfig:
    count: int = 20
    speed_max: float = 1.5
    p_redirect: float = 0.02
    p_birth: float = 0.0
    p_death: float = 0.0


@dataclass
class ScenarioConfig:
    map: str = "six_room.txt"
    n_robots: int = 20
    spawn: list = field(default_factory=lambda: [45.0, 1.0, 55.0, 7.0])  # x0, y0, x1, y1 (m)
    robot_speed: float = 2.0
    dt: float = 1.0
    steps: int = 4000
    seed: int = 0
    mode: str = "full"
    d_f: float = 50.0
    kde_bandwidth: list = field(default_factory=lambda: [5.0, 5.0])
    mu: float | None = None  # None: 1 / initial PHD intensity
    weight_variant: str = "signed"
    ospa_c: float = 10.0
    ospa_p: float = 1.0
    suppression_radius: float = 2.0
    smoothing_window_s: float = 20.0
    sensor: SensorConfig = field(default_factory=SensorConfig)
    phd: PhdConfig = field(default_factory=PhdConfig)
    targets: TargetConfig = field(default_factory=TargetConfig)

    def validate(self) -> "ScenarioConfig":
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.weight_variant not in ("signed", "squared"):
            raise ValueError("weight_variant must be 'signed' or 'squared'")
        if self.n_robots < 1:
            raise ValueError("n_robots must be >= 1")
        if self.dt <= 0 or self.steps < 0:
            raise ValueError("dt must be positive and steps nonnegative")
        if len(self.spawn) != 4:
            raise ValueError("spawn must be [x0, y0, x1, y1]")
        if len(self.kde_bandwidth) != 2 or min(self.kde_bandwidth) <= 0:
            raise ValueError("kde_bandwidth must be two positive numbers")
        if self.d_f < 0:
            raise ValueError("d_f must be nonnegative")
        self.sensor.model()
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if math.isinf(d["d_f"]):
            d["d_f"] = "inf"
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, **kw) -> "ScenarioConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return dataclasses.replace(self, **kw).validate()


_NESTED = {"sensor": SensorConfig, "phd": PhdConfig, "targets": TargetConfig}


def _coerce(value, default, where: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ScenarioError(f"{where}: expected true/false")
        return value
    if isinstance(default, float) or default is None:
        if value is None:
            return None
        if isinstance(value, str) and value.lower() in ("inf", "infinity", ".inf"):
            return math.inf
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ScenarioError(f"{where}: expected a number, got {value!r}")
    if isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ScenarioError(f"{where}: expected an integer, got {value!r}")
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ScenarioError(f"{where}: expected a list")
        return [float(v) for v in value]
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ScenarioError(f"{where}: expected a string")
        return value
    return value


def _build(cls, node: yaml.MappingNode, data: dict, path: str):
    defaults = cls()
    kwargs = {}
    names = {f.name for f in dataclasses.fields(cls)}
    for key_node, val_node in node.value:
        key = key_node.value
        where = f"{path}:{key_node.start_mark.line + 1}"
        if key not in names:
            raise ScenarioError(f"{where}: unknown key {key!r}")
        if key in _NESTED and cls is ScenarioConfig:
            if not isinstance(val_node, yaml.MappingNode):
                raise ScenarioError(f"{where}: {key!r} must be a mapping")
            kwargs[key] = _build(_NESTED[key], val_node, data[key], path)
        else:
            kwargs[key] = _coerce(data[key], getattr(defaults, key), where)
    return cls(**kwargs)


def parse_scenario(text: str, path: str = "<scenario>") -> ScenarioConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else "?"
        raise ScenarioError(f"{path}:{line}: {getattr(exc, 'problem', exc)}") from exc
    if node is None:
        return ScenarioConfig().validate()
    if not isinstance(node, yaml.MappingNode):
        raise ScenarioError(f"{path}:1: scenario must be a mapping")
    cfg = _build(ScenarioConfig, node, data, path)
    try:
        return cfg.validate()
    except ValueError as exc:
        raise ScenarioError(f"{path}:1: {exc}") from exc


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists() and (SCENARIO_DIR / path).exists():
        path = SCENARIO_DIR / path
    return parse_scenario(path.read_text(), str(path))


def dump_scenario(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
