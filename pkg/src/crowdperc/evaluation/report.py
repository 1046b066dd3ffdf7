"""Structured evaluation results and their JSON form."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Optional

from .detection import DEFAULT_THRESHOLDS
from .tracking import DEFAULT_TRACK_THRESHOLD

PROTOCOL = {
    "matching": "greedy by descending score; each detection takes the nearest unmatched gt within the threshold (inclusive)",
    "ap_integration": "mean of interpolated precision at recall k/100, k=0..100; precision is the running max from the right; no recall/precision floor",
    "ar": "same matcher as AP over all detections and gt, recall stratified by gt occlusion level, averaged over thresholds",
    "tracking": "CLEAR MOT; previous correspondences kept while within threshold, rest by gated Hungarian; GT counted per box",
    "mostly_tracked": "> 0.8 of frames matched",
    "mostly_lost": "< 0.2 of frames matched",
}


def _clean(v):
    """NaN is not valid JSON; absent values become null."""
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


@dataclass
class EvalReport:
    ap: Dict[float, float] = field(default_factory=dict)
    map: Optional[float] = None
    ar: Dict[int, float] = field(default_factory=dict)
    mota: Optional[float] = None
    mt: Optional[float] = None
    ml: Optional[float] = None
    ids: Optional[int] = None
    fp: Optional[int] = None
    fn: Optional[int] = None
    fde: Optional[float] = None
    mde: Optional[float] = None
    thresholds: tuple = DEFAULT_THRESHOLDS
    track_threshold: float = DEFAULT_TRACK_THRESHOLD
    distance_mode: str = "3d"
    extra: dict = field(default_factory=dict)

    def to_dict(self, config: Optional[dict] = None) -> dict:
        out = {}
        if self.ap:
            out["detection"] = {
                "ap": {f"{d:g}": _clean(v) for d, v in sorted(self.ap.items())},
                "map": _clean(self.map),
                "ar": {str(k): _clean(v) for k, v in sorted(self.ar.items())},
            }
        if self.mota is not None:
            out["tracking"] = {"mota": _clean(self.mota), "mt": _clean(self.mt), "ml": _clean(self.ml),
                               "ids": self.ids, "fp": self.fp, "fn": self.fn}
        if self.fde is not None:
            out["prediction"] = {"fde": _clean(self.fde), "mde": _clean(self.mde)}
        out.update(self.extra)
        out["protocol"] = dict(PROTOCOL, thresholds=list(self.thresholds),
                               track_threshold=self.track_threshold, distance_mode=self.distance_mode)
        if config is not None:
            out["config"] = config
        return out

    def to_json(self, config: Optional[dict] = None) -> str:
        return json.dumps(self.to_dict(config), indent=2, sort_keys=True) + "\n"
