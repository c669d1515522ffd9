"""Experiment configuration: YAML/JSON files mirroring ExperimentConfig."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

import yaml

from ..octree import OctreeParams
from ..planner import STRATEGIES, TERMINAL_COST
from ..sensor import SensorParams
from .simulate import SensorNoise


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class SensorConfig:
    num_rays: int = 32
    r_max: float = 2.0
    phi_plus: Union[float, list] = 0.3
    psi_plus: Union[float, list] = 1.5
    phi_minus: Union[float, list] = -1.0
    range_sigma: float = 0.03
    misclass_prob: float = 0.2
    start_angle: float = 0.01


@dataclass
class PlannerConfig:
    strategy: str = "semantic"
    min_frontier_size: int = 2
    terminal_cost: float = TERMINAL_COST


@dataclass
class OctreeConfig:
    enabled: bool = False
    max_depth: int = 5
    alpha: float = 0.5
    min_thresh: float = -2.0
    max_thresh: float = 3.5
    phi_plus_others: Optional[float] = None


@dataclass
class ExperimentConfig:
    environment: str = "maze_a"
    resolution: Optional[float] = None
    num_classes: Optional[int] = None
    sensor: SensorConfig = field(default_factory=SensorConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    octree: OctreeConfig = field(default_factory=OctreeConfig)
    seed: int = 0
    max_iterations: int = 40
    output_dir: str = "runs/out"

    def to_dict(self, with_output: bool = True) -> dict:
        d = asdict(self)
        if not with_output:
            del d["output_dir"]
        return d

    def hash(self) -> str:
        """Digest of everything that shapes the results (not where they go)."""
        blob = json.dumps(self.to_dict(with_output=False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def noise(self) -> SensorNoise:
        return SensorNoise(self.sensor.range_sigma, self.sensor.misclass_prob)

    def sensor_params(self, num_classes: int) -> SensorParams:
        s = self.sensor
        try:
            return SensorParams.planar(num_classes, s.num_rays, s.r_max, s.phi_plus, s.psi_plus,
                                       s.phi_minus, start_angle=s.start_angle)
        except ValueError as exc:
            raise ConfigError("sensor", str(exc)) from None

    def octree_params(self, resolution: float) -> OctreeParams:
        o = self.octree
        try:
            return OctreeParams(resolution, o.max_depth, o.alpha, o.min_thresh, o.max_thresh,
                                o.phi_plus_others)
        except ValueError as exc:
            raise ConfigError("octree", str(exc)) from None


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", f"expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(sub, "unknown field")
        default = known[key].default_factory() if callable(known[key].default_factory) else None
        if default is not None and hasattr(default, "__dataclass_fields__"):
            kwargs[key] = _build(type(default), value, sub)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def _expect(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(path, message)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    _expect(isinstance(cfg.environment, str) and cfg.environment, "environment", "must be a name or a CSV path")
    _expect(isinstance(cfg.seed, int) and not isinstance(cfg.seed, bool) and 0 <= cfg.seed < 2 ** 64,
            "seed", "must be an integer in [0, 2^64)")
    _expect(isinstance(cfg.max_iterations, int) and cfg.max_iterations >= 0,
            "max_iterations", "must be a non-negative integer")
    s = cfg.sensor
    _expect(isinstance(s.num_rays, int) and s.num_rays > 0, "sensor.num_rays", "must be a positive integer")
    _expect(_is_number(s.r_max) and s.r_max > 0, "sensor.r_max", "must be positive")
    _expect(_is_number(s.range_sigma) and s.range_sigma >= 0, "sensor.range_sigma", "must be >= 0")
    _expect(_is_number(s.misclass_prob) and 0 <= s.misclass_prob < 1,
            "sensor.misclass_prob", "must lie in [0, 1)")
    for name in ("phi_plus", "psi_plus", "phi_minus"):
        v = getattr(s, name)
        ok = _is_number(v) or (isinstance(v, list) and all(_is_number(x) for x in v))
        _expect(ok, f"sensor.{name}", "must be a number or a list of numbers")
    p = cfg.planner
    _expect(p.strategy in STRATEGIES, "planner.strategy", f"must be one of {', '.join(STRATEGIES)}")
    _expect(isinstance(p.min_frontier_size, int) and p.min_frontier_size >= 1,
            "planner.min_frontier_size", "must be a positive integer")
    _expect(_is_number(p.terminal_cost) and p.terminal_cost > 0, "planner.terminal_cost", "must be positive")
    o = cfg.octree
    _expect(isinstance(o.enabled, bool), "octree.enabled", "must be true or false")
    _expect(isinstance(o.max_depth, int) and 1 <= o.max_depth <= 16, "octree.max_depth", "must be in 1..16")
    _expect(_is_number(o.alpha) and 0 < o.alpha < 1, "octree.alpha", "must lie in (0, 1)")
    _expect(_is_number(o.min_thresh) and o.min_thresh < 0, "octree.min_thresh", "must be negative")
    _expect(_is_number(o.max_thresh) and o.max_thresh > 0, "octree.max_thresh", "must be positive")
    if cfg.resolution is not None:
        _expect(_is_number(cfg.resolution) and cfg.resolution > 0, "resolution", "must be positive")
    if cfg.num_classes is not None:
        _expect(isinstance(cfg.num_classes, int) and cfg.num_classes >= 1, "num_classes", "must be >= 1")
    return cfg


def config_from_dict(data: dict) -> ExperimentConfig:
    try:
        cfg = _build(ExperimentConfig, data, "")
    except TypeError as exc:
        raise ConfigError("<root>", str(exc)) from None
    return validate(cfg)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(str(path), f"malformed config: {exc}") from None
    return config_from_dict(data or {})


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
