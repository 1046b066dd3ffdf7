"""Prediction filtering: circle NMS and the minimum-points rule."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .core import Box3D, Detection

DEFAULT_NMS_RADIUS = 0.3
DEFAULT_MIN_POINTS = 5


@dataclass(frozen=True)
class NmsConfig:
    radius: float = DEFAULT_NMS_RADIUS
    min_points: int = DEFAULT_MIN_POINTS

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"NMS radius must be positive, got {self.radius}")
        if self.min_points < 0:
            raise ValueError(f"min_points must be >= 0, got {self.min_points}")

    def to_dict(self):
        return {"radius": self.radius, "min_points": self.min_points}


def circle_nms_indices(centers: np.ndarray, scores: np.ndarray, radius: float) -> np.ndarray:
    """Indices kept by greedy circle NMS, in acceptance order.

    Candidates are visited by descending score (ties keep input order); one is
    accepted iff its BEV distance to every accepted center is >= ``radius``.
    """
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    n = len(centers)
    if n == 0:
        return np.zeros(0, dtype=int)
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    c = centers[order]
    diff = c[:, None, :] - c[None, :, :]
    close = (diff ** 2).sum(axis=-1) < radius * radius
    suppressed = np.zeros(n, dtype=bool)
    keep = []
    for k in range(n):
        if suppressed[k]:
            continue
        keep.append(k)
        suppressed |= close[k]
    return order[keep]


def circle_nms(dets: Sequence[Detection], radius: float = DEFAULT_NMS_RADIUS) -> List[Detection]:
    if not dets:
        return []
    centers = np.array([[d.box3d.x, d.box3d.y] for d in dets])
    scores = np.array([d.score for d in dets])
    return [dets[i] for i in circle_nms_indices(centers, scores, radius)]


def points_in_box_mask(points: np.ndarray, b: Box3D) -> np.ndarray:
    """Boolean mask of points inside ``b``; faces count as inside."""
    pts = np.asarray(points, dtype=np.float64)
    dx = pts[:, 0] - b.x
    dy = pts[:, 1] - b.y
    c, s = np.cos(b.theta), np.sin(b.theta)
    # rotate by -theta into the box frame
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    return (np.abs(lx) <= b.l / 2) & (np.abs(ly) <= b.w / 2) & (np.abs(pts[:, 2] - b.z) <= b.h / 2)


def count_points_in_box(pc, b: Box3D) -> int:
    pts = pc.points if hasattr(pc, "points") else pc
    if len(pts) == 0:
        return 0
    return int(points_in_box_mask(pts, b).sum())


def filter_min_points(dets: Sequence[Detection], pc, min_points: int = DEFAULT_MIN_POINTS) -> List[Detection]:
    """Keep detections whose box holds at least ``min_points`` points; order preserved."""
    if min_points <= 0:
        return list(dets)
    return [d for d in dets if count_points_in_box(pc, d.box3d) >= min_points]


def postprocess(dets, pc, cfg: NmsConfig = NmsConfig()) -> List[Detection]:
    """Circle NMS followed by the minimum-points filter."""
    kept = circle_nms(list(dets), cfg.radius)
    if pc is None:
        return kept
    return filter_min_points(kept, pc, cfg.min_points)
