"""Multi-level peak decoding of heatmap pyramids into detections."""
from __future__ import annotations

import math
from typing import List

import numpy as np

from ..bev_encoding import heatmap_to_world
from ..core import Box3D, Detection
from .attention import Level
from .targets import REG_CHANNELS, HeatmapPyramid

DEFAULT_K_MAX = 500
DEFAULT_SCORE_THRESH = 0.1
DEFAULT_AGG_WEIGHT = 0.3

# neighbor offsets preceding a cell in raster order must be strictly lower
_EARLIER = ((-1, -1), (-1, 0), (-1, 1), (0, -1))
_LATER = ((0, 1), (1, -1), (1, 0), (1, 1))


def local_maxima(heat: np.ndarray, min_value: float = 0.0) -> np.ndarray:
    """Boolean mask of 3x3 local maxima with value > ``min_value``.

    A plateau of equal values yields exactly one maximum (its first cell in
    raster order).
    """
    heat = np.asarray(heat, dtype=np.float64)
    rows, cols = heat.shape
    padded = np.full((rows + 2, cols + 2), -np.inf)
    padded[1:-1, 1:-1] = heat
    mask = heat > min_value
    for dr, dc in _EARLIER:
        mask &= heat > padded[1 + dr:1 + dr + rows, 1 + dc:1 + dc + cols]
    for dr, dc in _LATER:
        mask &= heat >= padded[1 + dr:1 + dr + rows, 1 + dc:1 + dc + cols]
    return mask


def count_peaks(heat: np.ndarray, min_value: float = 0.5) -> int:
    return int(local_maxima(heat, min_value).sum())


def sample_bilinear(heat: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear samples at continuous map coordinates; cell (i, j) is sampled at its center (i+.5, j+.5).

    Coordinates beyond the outermost cell centers clamp to the border.
    """
    heat = np.asarray(heat, dtype=np.float64)
    rows, cols = heat.shape
    x = np.clip(np.asarray(u, dtype=np.float64) - 0.5, 0.0, cols - 1)
    y = np.clip(np.asarray(v, dtype=np.float64) - 0.5, 0.0, rows - 1)
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    x1 = np.minimum(x0 + 1, cols - 1)
    y1 = np.minimum(y0 + 1, rows - 1)
    fx = x - x0
    fy = y - y0
    top = heat[y0, x0] * (1 - fx) + heat[y0, x1] * fx
    bot = heat[y1, x0] * (1 - fx) + heat[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def decode_peaks(h: HeatmapPyramid, k_max: int = DEFAULT_K_MAX, score_thresh: float = DEFAULT_SCORE_THRESH,
                 agg_weight: float = DEFAULT_AGG_WEIGHT) -> List[Detection]:
    """Fine-level peaks rescored with coarse context, decoded into boxes.

    score = fine ** (1 - agg_weight) * coarse ** agg_weight, with the coarse map
    sampled bilinearly under each fine peak. Returns at most ``k_max``
    detections scoring strictly above ``score_thresh``, best first.
    """
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    if not 0.0 <= agg_weight <= 1.0:
        raise ValueError(f"agg_weight must lie in [0, 1], got {agg_weight}")
    fine = np.asarray(h.score(Level.FINE), dtype=np.float64)
    coarse = h.score(Level.COARSE)
    js, is_ = np.nonzero(local_maxima(fine, 0.0))
    if len(js) == 0:
        return []
    ratio = Level.FINE.stride / Level.COARSE.stride
    cu = (is_ + 0.5) * ratio
    cv = (js + 0.5) * ratio
    fine_vals = fine[js, is_]
    coarse_vals = sample_bilinear(coarse, cu, cv)
    scores = fine_vals ** (1.0 - agg_weight) * coarse_vals ** agg_weight
    keep = np.flatnonzero(scores > score_thresh)
    # stable sort keeps raster order among equal scores
    keep = keep[np.argsort(-scores[keep], kind="stable")][:k_max]

    reg = h.reg
    ch = {name: k for k, name in enumerate(REG_CHANNELS)}
    dets = []
    for k in keep:
        j, i = js[k], is_[k]
        r = reg[:, j, i].astype(np.float64)
        u = i + r[ch["off_u"]]
        v = j + r[ch["off_v"]]
        x, y = heatmap_to_world(np.array([u, v]), h.grid, Level.FINE.stride)
        l, w, hh = r[ch["l"]], r[ch["w"]], r[ch["h"]]
        if not (l > 0 and w > 0 and hh > 0):
            continue
        theta = math.atan2(r[ch["sin"]], r[ch["cos"]])
        box = Box3D(float(x), float(y), float(r[ch["z"]]), float(l), float(w), float(hh), theta)
        dets.append(Detection(box, float(scores[k]), (float(r[ch["vx"]]), float(r[ch["vy"]]))))
    return dets
