"""Run configuration: embedded defaults, YAML overrides, command-line overrides."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .errors import SchemaError
from .simulator import ScenarioConfig

METHODS = ("ilp", "static_c", "static_p")
SOLVERS = ("dp", "bnb")

DEFAULTS: dict = {
    "seed": 0,
    "paths": {
        "detections": None,
        "traces": None,
        "annotations": None,
        "model": None,
        "calibration": None,
        "output": "out",
    },
    "tracker": {
        "iou_threshold": 0.8,
        "min_contiguous_length": 2,
        "min_score": 0.4,
        "max_per_frame": 5,
    },
    "weights": {
        "alpha": 1.0,
        "key_by": "row",
        "outlier_breadth": 0.5,
        "ridge": 1e-6,
        "image_width": 1280,
        "image_height": 720,
    },
    "identify": {
        "method": "ilp",
        "solver": "dp",
        "static_c_cutoff": None,
    },
    "thresholds": {
        "iou": 0.5,
        "iou_difficult": 0.3,
    },
    "scenario": {k: v for k, v in asdict(ScenarioConfig()).items() if k != "seed"},
}


def deep_merge(base: dict, over: dict, where: str = "") -> dict:
    """Recursive override; unknown keys are schema errors so typos do not pass silently."""
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise SchemaError(f"unknown config key {where}{k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise SchemaError(f"config key {where}{k!r} must be a mapping")
            out[k] = deep_merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    seed: int = 0
    paths: dict = field(default_factory=lambda: dict(DEFAULTS["paths"]))
    tracker: dict = field(default_factory=lambda: dict(DEFAULTS["tracker"]))
    weights: dict = field(default_factory=lambda: dict(DEFAULTS["weights"]))
    identify: dict = field(default_factory=lambda: dict(DEFAULTS["identify"]))
    thresholds: dict = field(default_factory=lambda: dict(DEFAULTS["thresholds"]))
    scenario: dict = field(default_factory=lambda: dict(DEFAULTS["scenario"]))

    def __post_init__(self):
        if self.identify["method"] not in METHODS:
            raise SchemaError(f"method must be one of {METHODS}, got {self.identify['method']!r}")
        if self.identify["solver"] not in SOLVERS:
            raise SchemaError(f"solver must be one of {SOLVERS}, got {self.identify['solver']!r}")

    @classmethod
    def from_dict(cls, d: dict | None = None) -> "RunConfig":
        merged = deep_merge(DEFAULTS, d or {})
        return cls(**merged)

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        d: dict = {}
        if path is not None:
            text = Path(path).read_text(encoding="utf-8")
            try:
                d = yaml.safe_load(text) or {}
            except yaml.YAMLError as e:
                raise SchemaError(f"{path}: invalid YAML ({e})") from None
            if not isinstance(d, dict):
                raise SchemaError(f"{path}: config must be a mapping")
        merged = deep_merge(DEFAULTS, d)
        if overrides:
            merged = deep_merge(merged, overrides)
        return cls(**merged)

    def to_dict(self) -> dict:
        return asdict(self)

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(seed=int(self.seed), **self.scenario)

    def snapshot(self) -> dict:
        """Config without machine-specific paths (inputs are identified by hash instead)."""
        d = self.to_dict()
        d.pop("paths")
        return d


def dump_defaults() -> str:
    return yaml.safe_dump(DEFAULTS, sort_keys=True, default_flow_style=False)
