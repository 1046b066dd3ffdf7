"""CLEAR-MOT tracking metrics and a velocity-propagating greedy tracker."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..core import Box3D, Detection, DistanceMode, center_distance, pairwise_center_distances

DEFAULT_TRACK_THRESHOLD = 0.5
MOSTLY_TRACKED = 0.8
MOSTLY_LOST = 0.2
# cost assigned to gated-out pairs; any real pair is cheaper than this
_GATED = 1e9

TrackFrame = Sequence[Tuple[int, Box3D]]


@dataclass(frozen=True)
class ClearMotResult:
    mota: float
    fp: int
    fn: int
    ids: int
    mt: float
    ml: float
    gt: int
    matches: int
    num_tracks: int

    @property
    def mota_fraction(self) -> Fraction:
        """MOTA as an exact rational; ``mota`` is this value correctly rounded."""
        if self.gt == 0:
            raise ZeroDivisionError("MOTA is undefined without ground truth")
        return 1 - Fraction(self.fp + self.ids + self.fn, self.gt)

    def to_dict(self):
        return {"mota": self.mota, "fp": self.fp, "fn": self.fn, "ids": self.ids,
                "mt": self.mt, "ml": self.ml, "gt": self.gt, "matches": self.matches,
                "num_gt_tracks": self.num_tracks}


def _gated_assignment(cost: np.ndarray, threshold: float) -> List[Tuple[int, int]]:
    """Max-cardinality, min-total-distance assignment among pairs within ``threshold``."""
    if cost.size == 0:
        return []
    gated = np.where(cost <= threshold, cost, _GATED)
    rows, cols = linear_sum_assignment(gated)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if cost[r, c] <= threshold]


def clear_mot(gt_tracks: Sequence[TrackFrame], pred_tracks: Sequence[TrackFrame],
              threshold: float = DEFAULT_TRACK_THRESHOLD, mode=DistanceMode.EUCLID_3D) -> ClearMotResult:
    """MOTA = 1 - (FP + IDS + FN) / GT with GT counted per box.

    Per frame, correspondences from the previous frame are kept while still
    within ``threshold``; the remaining objects are assigned optimally
    (Hungarian on center distance, gated at ``threshold``). An identity switch
    is counted whenever a gt object is matched to a predicted id different
    from the one it was last matched to.
    """
    if len(gt_tracks) != len(pred_tracks):
        raise ValueError(f"{len(gt_tracks)} gt frames vs {len(pred_tracks)} prediction frames")
    fp = fn = ids = n_gt = n_match = 0
    prev_pairs: Dict[int, int] = {}
    last_assigned: Dict[int, int] = {}
    frames_present: Dict[int, int] = {}
    frames_matched: Dict[int, int] = {}
    for gframe, pframe in zip(gt_tracks, pred_tracks):
        gids = [int(t) for t, _ in gframe]
        pids = [int(t) for t, _ in pframe]
        if len(set(gids)) != len(gids) or len(set(pids)) != len(pids):
            raise ValueError("a track id occurs twice in one frame")
        gpos = {t: k for k, t in enumerate(gids)}
        ppos = {t: k for k, t in enumerate(pids)}
        dist = pairwise_center_distances([b for _, b in gframe], [b for _, b in pframe], mode)
        pairs: Dict[int, int] = {}
        for g, p in prev_pairs.items():
            if g in gpos and p in ppos and dist[gpos[g], ppos[p]] <= threshold:
                pairs[g] = p
        free_g = [k for k, g in enumerate(gids) if g not in pairs]
        used_p = set(pairs.values())
        free_p = [k for k, p in enumerate(pids) if p not in used_p]
        sub = dist[np.ix_(free_g, free_p)] if free_g and free_p else np.zeros((0, 0))
        for r, c in _gated_assignment(sub, threshold):
            pairs[gids[free_g[r]]] = pids[free_p[c]]
        for g, p in pairs.items():
            if g in last_assigned and last_assigned[g] != p:
                ids += 1
            last_assigned[g] = p
            frames_matched[g] = frames_matched.get(g, 0) + 1
        for g in gids:
            frames_present[g] = frames_present.get(g, 0) + 1
        n_gt += len(gids)
        n_match += len(pairs)
        fn += len(gids) - len(pairs)
        fp += len(pids) - len(pairs)
        prev_pairs = pairs
    mota = float(1 - Fraction(fp + ids + fn, n_gt)) if n_gt else math.nan
    ratios = [frames_matched.get(g, 0) / n for g, n in frames_present.items()]
    mt = sum(r > MOSTLY_TRACKED for r in ratios) / len(ratios) if ratios else math.nan
    ml = sum(r < MOSTLY_LOST for r in ratios) / len(ratios) if ratios else math.nan
    return ClearMotResult(mota=mota, fp=fp, fn=fn, ids=ids, mt=mt, ml=ml, gt=n_gt,
                          matches=n_match, num_tracks=len(ratios))


@dataclass
class _Track:
    track_id: int
    x: float
    y: float
    velocity: Tuple[float, float]
    last_time: float
    misses: int = 0


def greedy_velocity_tracker(det_frames: Sequence[Tuple[float, Sequence[Detection]]],
                            threshold: float = 1.0, max_misses: int = 1) -> List[List[Tuple[int, Box3D]]]:
    """Tracking-by-detection with constant-velocity propagation.

    ``det_frames`` is a time-ordered list of (timestamp, detections). Live
    tracks are moved by their last velocity times the elapsed time, then
    (track, detection) pairs are accepted nearest-first while both are free
    and within ``threshold`` (BEV). Unmatched detections open new ids; a track
    missing more than ``max_misses`` consecutive frames ends.
    """
    tracks: List[_Track] = []
    next_id = 0
    out = []
    prev_t = None
    for t, dets in det_frames:
        t = float(t)
        if prev_t is not None and not t > prev_t:
            raise ValueError(f"frames must be time-ordered ({prev_t} -> {t})")
        prev_t = t
        dets = list(dets)
        pairs = []
        if tracks and dets:
            pred = np.array([[tr.x + tr.velocity[0] * (t - tr.last_time),
                              tr.y + tr.velocity[1] * (t - tr.last_time)] for tr in tracks])
            cur = np.array([[d.box3d.x, d.box3d.y] for d in dets])
            dist = np.sqrt(((pred[:, None, :] - cur[None, :, :]) ** 2).sum(axis=-1))
            ti, di = np.nonzero(dist <= threshold)
            order = np.lexsort((di, ti, dist[ti, di]))
            used_t, used_d = set(), set()
            for k in order:
                a, b = int(ti[k]), int(di[k])
                if a in used_t or b in used_d:
                    continue
                used_t.add(a)
                used_d.add(b)
                pairs.append((a, b))
        matched_t = {a for a, _ in pairs}
        matched_d = {b for _, b in pairs}
        frame_out = []
        for a, b in pairs:
            tr, d = tracks[a], dets[b]
            tr.x, tr.y = d.box3d.x, d.box3d.y
            tr.velocity = d.velocity if d.velocity is not None else (0.0, 0.0)
            tr.last_time = t
            tr.misses = 0
            frame_out.append((tr.track_id, d.box3d))
        survivors = []
        for k, tr in enumerate(tracks):
            if k not in matched_t:
                tr.misses += 1
                if tr.misses > max_misses:
                    continue
            survivors.append(tr)
        for b, d in enumerate(dets):
            if b in matched_d:
                continue
            vel = d.velocity if d.velocity is not None else (0.0, 0.0)
            survivors.append(_Track(next_id, d.box3d.x, d.box3d.y, vel, t))
            frame_out.append((next_id, d.box3d))
            next_id += 1
        tracks = survivors
        frame_out.sort(key=lambda e: e[0])
        out.append(frame_out)
    return out
