"""Hierarchical Gaussian heatmap targets and the Gaussian focal loss."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..bev_encoding import GridSpec, world_to_heatmap
from ..core import Instance
from .attention import Level

#: regression channels stored at the fine level, in order
REG_CHANNELS = ("off_u", "off_v", "z", "l", "w", "h", "sin", "cos", "vx", "vy")
FOCAL_EPS = 1e-6
#: Gaussians are evaluated out to this many sigmas; beyond is exactly zero
WINDOW_SIGMAS = 4.0


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GaussianTargetParams:
    sigma_min: float = 1.0
    sigma_factor: float = 1.0 / 6.0
    alpha: float = 2.0
    beta: float = 4.0

    def __post_init__(self):
        if self.sigma_min <= 0:
            raise ValueError(f"sigma_min must be positive, got {self.sigma_min}")
        if self.sigma_factor <= 0:
            raise ValueError(f"sigma_factor must be positive, got {self.sigma_factor}")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError(f"focal alpha and beta must be positive, got {self.alpha}, {self.beta}")

    def to_dict(self):
        return {"sigma_min": self.sigma_min, "sigma_factor": self.sigma_factor,
                "alpha": self.alpha, "beta": self.beta}


@dataclass
class HeatmapPyramid:
    """Score maps per level plus fine-level regression targets.

    Maps are (H, W) = (rows along y, columns along x), float32. ``reg`` is
    (10, H_fine, W_fine) ordered as :data:`REG_CHANNELS`; ``reg_mask`` marks the
    fine cells that carry a regression target.
    """

    grid: GridSpec
    scores: Dict[Level, np.ndarray]
    reg: np.ndarray
    reg_mask: np.ndarray
    skipped: int = 0
    center_cells: Dict[Level, np.ndarray] = field(default_factory=dict, repr=False)

    def score(self, level) -> np.ndarray:
        return self.scores[Level(level)]

    def positive_mask(self, level) -> np.ndarray:
        """Cells holding an instance center at ``level``."""
        level = Level(level)
        return self.center_cells.get(level, np.zeros(self.scores[level].shape, dtype=bool))


def footprint_sigma(l: float, w: float, grid: GridSpec, p: GaussianTargetParams) -> float:
    """Regular-level sigma in cells: a fixed fraction of the footprint diagonal, floored."""
    diag_cells = math.hypot(l / grid.voxel_size[0], w / grid.voxel_size[1])
    return max(p.sigma_min, p.sigma_factor * diag_cells)


def level_sigma(sigma_regular: float, level: Level, p: GaussianTargetParams) -> float:
    if level is Level.FINE:
        return 2.0 * sigma_regular
    if level is Level.COARSE:
        return max(sigma_regular / 2.0, p.sigma_min)
    return sigma_regular


def splat_gaussian(heat: np.ndarray, u0: float, v0: float, sigma: float):
    """Max-combine exp(-d^2 / 2 sigma^2) centered at continuous (u0, v0) into ``heat`` (float64)."""
    rows, cols = heat.shape
    radius = int(math.ceil(WINDOW_SIGMAS * sigma)) + 1
    ci, cj = int(math.floor(u0)), int(math.floor(v0))
    i0, i1 = max(ci - radius, 0), min(ci + radius + 1, cols)
    j0, j1 = max(cj - radius, 0), min(cj + radius + 1, rows)
    if i0 >= i1 or j0 >= j1:
        return
    du = (np.arange(i0, i1) + 0.5) - u0
    dv = (np.arange(j0, j1) + 0.5) - v0
    g = np.exp(-(dv[:, None] ** 2 + du[None, :] ** 2) / (2.0 * sigma * sigma))
    np.maximum(heat[j0:j1, i0:i1], g, out=heat[j0:j1, i0:i1])


def render_targets(instances: Sequence[Instance], g: GridSpec, p: GaussianTargetParams = GaussianTargetParams(),
                   velocities: Optional[Mapping[int, Tuple[float, float]]] = None) -> HeatmapPyramid:
    """Render coarse/regular/fine Gaussian score maps and fine regression maps.

    Instances whose BEV center lies outside the grid are skipped and counted.
    Regression targets go to the fine cell containing each center; when two
    centers share a cell the larger track id wins.
    """
    velocities = velocities or {}
    heat = {lvl: np.zeros(g.level_shape(lvl.stride)) for lvl in Level}
    centers = {lvl: np.zeros(heat[lvl].shape, dtype=bool) for lvl in Level}
    fh, fw = heat[Level.FINE].shape
    reg = np.zeros((len(REG_CHANNELS), fh, fw))
    reg_mask = np.zeros((fh, fw), dtype=bool)
    skipped = 0
    for inst in sorted(instances, key=lambda i: i.track_id):
        b = inst.box3d
        if not g.contains_bev(b.x, b.y):
            skipped += 1
            continue
        sigma = footprint_sigma(b.l, b.w, g, p)
        for lvl in Level:
            u0, v0 = world_to_heatmap((b.x, b.y), g, lvl.stride)
            splat_gaussian(heat[lvl], u0, v0, level_sigma(sigma, lvl, p))
            rows, cols = heat[lvl].shape
            centers[lvl][min(int(v0), rows - 1), min(int(u0), cols - 1)] = True
        u0, v0 = world_to_heatmap((b.x, b.y), g, Level.FINE.stride)
        i, j = min(int(u0), fw - 1), min(int(v0), fh - 1)
        vx, vy = velocities.get(inst.track_id, (0.0, 0.0))
        reg[:, j, i] = (u0 - i, v0 - j, b.z, b.l, b.w, b.h, math.sin(b.theta), math.cos(b.theta), vx, vy)
        reg_mask[j, i] = True
    pyr = HeatmapPyramid(
        grid=g,
        scores={lvl: heat[lvl].astype(np.float32) for lvl in Level},
        reg=reg.astype(np.float32),
        reg_mask=reg_mask,
        skipped=skipped,
        center_cells=centers,
    )
    return pyr


def gaussian_focal_loss(pred: np.ndarray, target: np.ndarray, p: GaussianTargetParams = GaussianTargetParams(),
                        pos_mask: Optional[np.ndarray] = None) -> float:
    """Penalty-reduced focal loss on a Gaussian target map.

    Cells with target exactly 1 (or ``pos_mask`` when given) are positives and
    contribute (1 - p)^alpha log p; all others contribute
    (1 - y)^beta p^alpha log(1 - p). The negated sum is divided by
    max(1, number of positives).
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs target {target.shape}")
    pr = np.clip(pred, FOCAL_EPS, 1.0 - FOCAL_EPS)
    pos = target == 1.0 if pos_mask is None else np.asarray(pos_mask, dtype=bool)
    if pos.shape != target.shape:
        raise ShapeMismatch(f"positive mask {pos.shape} vs target {target.shape}")
    neg = ~pos
    pos_term = ((1.0 - pr[pos]) ** p.alpha * np.log(pr[pos])).sum()
    neg_term = ((1.0 - target[neg]) ** p.beta * pr[neg] ** p.alpha * np.log(1.0 - pr[neg])).sum()
    return float(-(pos_term + neg_term) / max(1, int(pos.sum())))
