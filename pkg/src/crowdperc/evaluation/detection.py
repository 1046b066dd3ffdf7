"""Detection metrics: AP per center-distance threshold, mAP, occlusion-stratified AR."""
from __future__ import annotations

import math
from typing import Dict, Optional, Sequence

import numpy as np

from ..core import DistanceMode, OcclusionLevel, pairwise_center_distances
from .matching import _box, greedy_match, score_order

DEFAULT_THRESHOLDS = (0.25, 0.5, 1.0)
#: recall levels at which interpolated precision is sampled (k / 100)
RECALL_POINTS = np.arange(101) / 100.0


class MisalignedFrames(ValueError):
    pass


def _instances(frame):
    return list(frame.instances) if hasattr(frame, "instances") else list(frame)


def _check_aligned(gt_frames, det_frames):
    if len(gt_frames) != len(det_frames):
        raise MisalignedFrames(f"{len(gt_frames)} ground-truth frames vs {len(det_frames)} prediction frames")


def _frame_assignment(gt, dets, threshold, mode):
    dist = pairwise_center_distances([_box(d) for d in dets], [_box(g) for g in gt], mode)
    return greedy_match(dist, score_order([d.score for d in dets]), threshold)


def precision_recall(gt_frames, det_frames, threshold: float, mode=DistanceMode.EUCLID_3D):
    """Pooled PR curve: (scores, precision, recall, n_gt) in descending-score order."""
    _check_aligned(gt_frames, det_frames)
    scores, tps = [], []
    n_gt = 0
    for gf, df in zip(gt_frames, det_frames):
        gt, dets = _instances(gf), list(df)
        n_gt += len(gt)
        assigned = _frame_assignment(gt, dets, threshold, mode)
        scores.extend(d.score for d in dets)
        tps.extend(assigned >= 0)
    scores = np.asarray(scores, dtype=np.float64)
    order = score_order(scores)
    tp = np.asarray(tps, dtype=bool)[order]
    ctp = np.cumsum(tp)
    precision = ctp / np.arange(1, len(tp) + 1)
    recall = ctp / n_gt if n_gt else np.zeros(len(tp))
    return scores[order], precision, recall, n_gt


def interpolated_ap(precision: np.ndarray, recall: np.ndarray) -> float:
    """Mean over 101 recall levels of the best precision at recall >= level (0 when unreached)."""
    if len(precision) == 0:
        return 0.0
    right_max = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    vals = np.where(idx < len(recall), right_max[np.minimum(idx, len(recall) - 1)], 0.0)
    return float(vals.mean())


def average_precision(gt_frames, det_frames, threshold: float, mode=DistanceMode.EUCLID_3D) -> float:
    """AP at one center-distance threshold; NaN when there is no ground truth."""
    _, precision, recall, n_gt = precision_recall(gt_frames, det_frames, threshold, mode)
    if n_gt == 0:
        return math.nan
    return interpolated_ap(precision, recall)


def ap_per_threshold(gt_frames, det_frames, thresholds=DEFAULT_THRESHOLDS, mode=DistanceMode.EUCLID_3D) -> Dict[float, float]:
    return {float(d): average_precision(gt_frames, det_frames, d, mode) for d in thresholds}


def mean_ap(gt_frames, det_frames, thresholds=DEFAULT_THRESHOLDS, mode=DistanceMode.EUCLID_3D) -> float:
    aps = ap_per_threshold(gt_frames, det_frames, thresholds, mode)
    return float(sum(aps.values()) / len(aps))


def recall_by_occlusion(gt_frames, det_frames, threshold: float, mode=DistanceMode.EUCLID_3D) -> Dict[int, tuple]:
    """Per occlusion level: (matched gt, total gt) under full-scene matching."""
    _check_aligned(gt_frames, det_frames)
    acc = {int(l): [0, 0] for l in OcclusionLevel}
    for gf, df in zip(gt_frames, det_frames):
        gt, dets = _instances(gf), list(df)
        assigned = _frame_assignment(gt, dets, threshold, mode)
        matched = set(int(g) for g in assigned if g >= 0)
        for gi, inst in enumerate(gt):
            slot = acc[int(inst.occlusion)]
            slot[1] += 1
            slot[0] += gi in matched
    return {k: tuple(v) for k, v in acc.items()}


def average_recall_occlusion(gt_frames, det_frames, level, thresholds=DEFAULT_THRESHOLDS,
                             mode=DistanceMode.EUCLID_3D) -> Optional[float]:
    """Recall of level-``level`` ground truth averaged over thresholds; None if the level is empty."""
    level = int(OcclusionLevel(level))
    recalls = []
    for d in thresholds:
        matched, total = recall_by_occlusion(gt_frames, det_frames, d, mode)[level]
        if total == 0:
            return None
        recalls.append(matched / total)
    return float(sum(recalls) / len(recalls))


def detection_metrics(gt_frames, det_frames, thresholds=DEFAULT_THRESHOLDS, mode=DistanceMode.EUCLID_3D) -> dict:
    """AP per threshold, mAP and AR per occlusion level in one pass over the thresholds."""
    gt_frames, det_frames = list(gt_frames), list(det_frames)
    aps = ap_per_threshold(gt_frames, det_frames, thresholds, mode)
    per_level = {int(l): [] for l in OcclusionLevel}
    for d in thresholds:
        for lvl, (m, t) in recall_by_occlusion(gt_frames, det_frames, d, mode).items():
            per_level[lvl].append(None if t == 0 else m / t)
    ar = {lvl: float(sum(v) / len(v)) for lvl, v in per_level.items() if v and None not in v}
    return {"ap": aps, "map": float(sum(aps.values()) / len(aps)), "ar": ar}
