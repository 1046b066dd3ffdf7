"""Greedy score-ordered center-distance matching."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from ..core import Box3D, Detection, DistanceMode, Instance, pairwise_center_distances


@dataclass
class MatchResult:
    pairs: List[Tuple[int, int, float]] = field(default_factory=list)
    unmatched_gt: List[int] = field(default_factory=list)
    unmatched_det: List[int] = field(default_factory=list)

    @property
    def num_tp(self) -> int:
        return len(self.pairs)

    def matched_gt(self) -> set:
        return {g for g, _, _ in self.pairs}


def _box(x) -> Box3D:
    return x.box3d if hasattr(x, "box3d") else x


def score_order(scores) -> np.ndarray:
    """Indices by descending score, ties in input order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def greedy_match(dist: np.ndarray, order: np.ndarray, threshold: float) -> np.ndarray:
    """For each detection (rows of ``dist`` visited in ``order``), the matched gt column or -1.

    Each detection takes the nearest still-unmatched gt within ``threshold``
    (inclusive); among equidistant gt the lowest index wins.
    """
    n_det, n_gt = dist.shape
    assigned = np.full(n_det, -1, dtype=int)
    if n_gt == 0:
        return assigned
    taken = np.zeros(n_gt, dtype=bool)
    for d in order:
        row = np.where(taken, np.inf, dist[d])
        g = int(np.argmin(row))
        if row[g] <= threshold:
            assigned[d] = g
            taken[g] = True
    return assigned


def match_detections(gt: Sequence[Instance], dets: Sequence[Detection], threshold: float,
                     mode=DistanceMode.EUCLID_3D) -> MatchResult:
    if not threshold > 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    gt_boxes = [_box(g) for g in gt]
    det_boxes = [_box(d) for d in dets]
    dist = pairwise_center_distances(det_boxes, gt_boxes, mode)
    assigned = greedy_match(dist, score_order([d.score for d in dets]), threshold)
    pairs = [(int(g), int(d), float(dist[d, g])) for d, g in enumerate(assigned) if g >= 0]
    pairs.sort(key=lambda p: p[0])
    matched_gt = {p[0] for p in pairs}
    return MatchResult(
        pairs=pairs,
        unmatched_gt=[i for i in range(len(gt_boxes)) if i not in matched_gt],
        unmatched_det=[int(d) for d in np.flatnonzero(assigned < 0)],
    )
