"""Report figures rendered straight to PNG files (no display needed)."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Mapping, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dha.attention import Level  # noqa: E402
from .dha.targets import HeatmapPyramid  # noqa: E402

# fixed metadata keeps repeated renders byte-stable
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_pr_curves(curves: Mapping[float, Tuple[np.ndarray, np.ndarray]], path) -> Path:
    """One precision-recall curve per distance threshold; ``curves[d] = (precision, recall)``."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for d, (precision, recall) in sorted(curves.items()):
        if len(recall):
            ax.plot(np.concatenate([[0.0], recall]), np.concatenate([[precision[0]], precision]),
                    label=f"d = {d:g} m")
    ax.set_xlim(0, 1.0)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.legend(loc="lower left")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_points_vs_distance(means: Mapping[int, float], bin_width: float, path) -> Path:
    """Bar chart of mean LiDAR points per pedestrian against distance bin."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    keys = sorted(means)
    ax.bar([k * bin_width + bin_width / 2 for k in keys], [means[k] for k in keys],
           width=0.8 * bin_width)
    ax.set_xlabel("distance to sensor (m)")
    ax.set_ylabel("mean points per pedestrian")
    return _save(fig, path)


def plot_histogram(hist: Mapping[int, int], path, xlabel: str, labels: Dict[int, str] = None) -> Path:
    """Bar chart of integer-keyed counts (crowd levels, occlusion levels)."""
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    keys = sorted(hist)
    ax.bar(range(len(keys)), [hist[k] for k in keys])
    ax.set_xticks(range(len(keys)))
    ax.set_xticklabels([(labels or {}).get(k, str(k)) for k in keys])
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    return _save(fig, path)


def plot_heatmap_pyramid(h: HeatmapPyramid, path) -> Path:
    """Coarse, regular and fine score maps side by side, x to the right and y up."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    g = h.grid
    extent = (g.x_range[0], g.x_range[1], g.y_range[0], g.y_range[1])
    for ax, lvl in zip(axes, (Level.COARSE, Level.REGULAR, Level.FINE)):
        heat = h.score(lvl)
        ax.imshow(heat, origin="lower", extent=extent, vmin=0.0, vmax=1.0, cmap="magma",
                  interpolation="nearest", aspect="auto")
        ax.set_title(f"{lvl.value} {heat.shape[1]}x{heat.shape[0]}")
        ax.set_xlabel("x (m)")
    axes[0].set_ylabel("y (m)")
    fig.tight_layout()
    return _save(fig, path)
