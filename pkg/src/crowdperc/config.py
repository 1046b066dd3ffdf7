"""Resolved run configuration shared by the CLI subcommands.

Every field has a default; a JSON config file may override any subset of
them. Unknown keys are rejected so typos do not silently fall back to
defaults.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple

from .bev_encoding import DEFAULT_MAX_POINTS_PER_CELL, GridSpec, default_grid
from .core import DistanceMode
from .dha.decode import DEFAULT_AGG_WEIGHT, DEFAULT_K_MAX, DEFAULT_SCORE_THRESH
from .dha.targets import GaussianTargetParams
from .evaluation.detection import DEFAULT_THRESHOLDS
from .evaluation.tracking import DEFAULT_TRACK_THRESHOLD
from .postprocess import NmsConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DecodeParams:
    k_max: int = DEFAULT_K_MAX
    score_thresh: float = DEFAULT_SCORE_THRESH
    agg_weight: float = DEFAULT_AGG_WEIGHT

    def __post_init__(self):
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ValueError(f"k_max must be a positive integer, got {self.k_max}")
        if not 0.0 <= self.agg_weight <= 1.0:
            raise ValueError(f"agg_weight must lie in [0, 1], got {self.agg_weight}")

    def to_dict(self):
        return {"k_max": int(self.k_max), "score_thresh": self.score_thresh, "agg_weight": self.agg_weight}


@dataclass(frozen=True)
class TrackerParams:
    """Baseline tracker association gate (m) and coast length (frames)."""

    threshold: float = 1.0
    max_misses: int = 1

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError(f"tracker threshold must be positive, got {self.threshold}")
        if int(self.max_misses) != self.max_misses or self.max_misses < 0:
            raise ValueError(f"max_misses must be a non-negative integer, got {self.max_misses}")

    def to_dict(self):
        return {"threshold": self.threshold, "max_misses": int(self.max_misses)}


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec = field(default_factory=default_grid)
    nms: NmsConfig = field(default_factory=NmsConfig)
    targets: GaussianTargetParams = field(default_factory=GaussianTargetParams)
    decode: DecodeParams = field(default_factory=DecodeParams)
    tracker: TrackerParams = field(default_factory=TrackerParams)
    thresholds: Tuple[float, ...] = DEFAULT_THRESHOLDS
    track_threshold: float = DEFAULT_TRACK_THRESHOLD
    distance_mode: DistanceMode = DistanceMode.EUCLID_3D
    max_points_per_cell: int = DEFAULT_MAX_POINTS_PER_CELL

    def __post_init__(self):
        th = tuple(float(d) for d in self.thresholds)
        if not th or min(th) <= 0:
            raise ValueError(f"thresholds must be a non-empty list of positive distances, got {self.thresholds}")
        object.__setattr__(self, "thresholds", th)
        if not self.track_threshold > 0:
            raise ValueError(f"track_threshold must be positive, got {self.track_threshold}")
        object.__setattr__(self, "distance_mode", DistanceMode.parse(self.distance_mode))

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "nms": self.nms.to_dict(),
            "targets": self.targets.to_dict(),
            "decode": self.decode.to_dict(),
            "tracker": self.tracker.to_dict(),
            "thresholds": list(self.thresholds),
            "track_threshold": self.track_threshold,
            "distance_mode": self.distance_mode.value,
            "max_points_per_cell": self.max_points_per_cell,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        """Build from a (possibly partial) mapping; missing keys keep defaults."""
        if not isinstance(d, dict):
            raise ConfigError(f"config must be a JSON object, got {type(d).__name__}")
        base = cls().to_dict()
        unknown = sorted(set(d) - set(base))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        merged = dict(base)
        for key, value in d.items():
            if isinstance(base[key], dict):
                if not isinstance(value, dict):
                    raise ConfigError(f"config key '{key}' must be an object")
                extra = sorted(set(value) - set(base[key]))
                if extra:
                    raise ConfigError(f"unknown keys under '{key}': {', '.join(extra)}")
                merged[key] = {**base[key], **value}
            else:
                merged[key] = value
        try:
            return cls(
                grid=GridSpec.from_dict(merged["grid"]),
                nms=NmsConfig(**merged["nms"]),
                targets=GaussianTargetParams(**merged["targets"]),
                decode=DecodeParams(**merged["decode"]),
                tracker=TrackerParams(**merged["tracker"]),
                thresholds=tuple(merged["thresholds"]),
                track_threshold=float(merged["track_threshold"]),
                distance_mode=merged["distance_mode"],
                max_points_per_cell=merged["max_points_per_cell"],
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes) -> "RunConfig":
        d = self.to_dict()
        d.update(changes)
        return RunConfig.from_dict(d)


def load_config(path) -> RunConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return RunConfig.from_dict(obj)


def dumps_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
