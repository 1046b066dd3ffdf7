"""Trajectory prediction errors."""
from __future__ import annotations

import math
from typing import Dict, Sequence

import numpy as np

from ..core import Trajectory

TIME_TOL = 1e-6


class LengthMismatch(ValueError):
    pass


class MisalignedTimestamps(ValueError):
    pass


def _displacements(pred: Trajectory, gt: Trajectory) -> np.ndarray:
    if len(pred) != len(gt):
        raise LengthMismatch(f"predicted trajectory has {len(pred)} steps, ground truth {len(gt)}")
    if np.any(np.abs(pred.timestamps - gt.timestamps) > TIME_TOL):
        raise MisalignedTimestamps("predicted and ground-truth timestamps differ")
    return np.linalg.norm(pred.positions - gt.positions, axis=1)


def fde(pred: Trajectory, gt: Trajectory) -> float:
    """Euclidean error at the last step."""
    return float(_displacements(pred, gt)[-1])


def mde(pred: Trajectory, gt: Trajectory) -> float:
    """Euclidean error averaged over all steps."""
    return float(_displacements(pred, gt).mean())


def prediction_metrics(preds: Sequence[Trajectory], gts: Sequence[Trajectory]) -> dict:
    """Mean FDE/MDE over ground-truth trajectories paired by track id.

    Ground-truth tracks with no prediction are counted in ``missing``.
    """
    by_id: Dict[int, Trajectory] = {p.track_id: p for p in preds}
    f, m, missing = [], [], 0
    for g in gts:
        p = by_id.get(g.track_id)
        if p is None:
            missing += 1
            continue
        f.append(fde(p, g))
        m.append(mde(p, g))
    return {
        "fde": float(np.mean(f)) if f else math.nan,
        "mde": float(np.mean(m)) if m else math.nan,
        "num_trajectories": len(f),
        "missing": missing,
    }
