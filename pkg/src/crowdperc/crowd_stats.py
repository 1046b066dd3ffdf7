"""Crowd density statistics for frames and datasets."""
from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Sequence

import numpy as np

from .core import Frame, OcclusionLevel

DENSITY_RADII = (2.0, 5.0, 10.0)
#: scan diameter used for Person/Range when none is configured, meters
DEFAULT_SCAN_DIAMETER = 50.0


class CrowdLevel(enum.IntEnum):
    SPARSE = 0      # fewer than 10 pedestrians
    MODERATE = 1    # 10 to 19
    DENSE = 2       # 20 to 29
    EXTREME = 3     # 30 or more


@dataclass(frozen=True)
class DensityProfile:
    density_2: float
    density_5: float
    density_10: float
    person_per_frame: float
    person_per_range: float

    def to_dict(self):
        return asdict(self)


def _neighbor_counts(centers: np.ndarray, radius: float) -> np.ndarray:
    diff = centers[:, None, :] - centers[None, :, :]
    d = np.sqrt((diff ** 2).sum(axis=-1))
    # the diagonal is zero and always within radius; remove self
    return (d <= radius).sum(axis=1) - 1


def density_k(frame: Frame, radius: float) -> float:
    """Mean number of other pedestrians within ``radius`` (BEV) of each pedestrian."""
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    centers = frame.centers_bev()
    if len(centers) == 0:
        return 0.0
    return float(_neighbor_counts(centers, radius).mean())


def crowd_level(frame_or_count) -> CrowdLevel:
    """Density level from the pedestrian count; boundary counts go to the higher level."""
    if hasattr(frame_or_count, "instances"):
        n = len(frame_or_count.instances)
    else:
        n = int(frame_or_count)
    if n < 10:
        return CrowdLevel.SPARSE
    if n < 20:
        return CrowdLevel.MODERATE
    if n < 30:
        return CrowdLevel.DENSE
    return CrowdLevel.EXTREME


def person_per_range(frame: Frame, scan_diameter: float) -> float:
    if scan_diameter <= 0:
        raise ValueError(f"scan_diameter must be positive, got {scan_diameter}")
    return len(frame.instances) / scan_diameter


def points_vs_distance(frames: Iterable[Frame], bin_width: float, origin=(0.0, 0.0)) -> Dict[int, float]:
    """Mean ``num_points`` per BEV-distance bin, keyed by bin index.

    Bin ``k`` covers distances [k * bin_width, (k + 1) * bin_width). Empty bins are absent.
    """
    counts = points_vs_distance_counts(frames, bin_width, origin)
    return {k: total / n for k, (n, total) in counts.items()}


def points_vs_distance_counts(frames, bin_width, origin=(0.0, 0.0)) -> Dict[int, tuple]:
    """Per bin: (instance count, summed num_points)."""
    if bin_width <= 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    acc: Dict[int, list] = {}
    ox, oy = origin
    for fr in frames:
        for inst in fr.instances:
            d = math.hypot(inst.box3d.x - ox, inst.box3d.y - oy)
            k = int(d // bin_width)
            slot = acc.setdefault(k, [0, 0])
            slot[0] += 1
            slot[1] += inst.num_points
    return {k: (v[0], v[1]) for k, v in sorted(acc.items())}


def occlusion_histogram(frames: Iterable[Frame]) -> Dict[int, int]:
    hist = Counter({int(level): 0 for level in OcclusionLevel})
    for fr in frames:
        hist.update(int(i.occlusion) for i in fr.instances)
    return dict(sorted(hist.items()))


def crowd_level_histogram(frames: Iterable[Frame]) -> Dict[int, int]:
    hist = Counter({int(level): 0 for level in CrowdLevel})
    hist.update(int(crowd_level(fr)) for fr in frames)
    return dict(sorted(hist.items()))


def density_profile(frames: Sequence[Frame], scan_diameter: float = DEFAULT_SCAN_DIAMETER) -> DensityProfile:
    """Dataset-level profile.

    Density-k is averaged over all pedestrians of all frames (each pedestrian is
    one sample); per-frame quantities are averaged over frames.
    """
    if scan_diameter <= 0:
        raise ValueError(f"scan_diameter must be positive, got {scan_diameter}")
    frames = list(frames)
    per_radius = {r: [] for r in DENSITY_RADII}
    for fr in frames:
        centers = fr.centers_bev()
        if len(centers) == 0:
            continue
        for r in DENSITY_RADII:
            per_radius[r].append(_neighbor_counts(centers, r))
    dens = [float(np.concatenate(v).mean()) if v else 0.0 for v in per_radius.values()]
    counts = [len(fr.instances) for fr in frames]
    ppf = float(np.mean(counts)) if counts else 0.0
    return DensityProfile(
        density_2=dens[0], density_5=dens[1], density_10=dens[2],
        person_per_frame=ppf,
        person_per_range=ppf / scan_diameter,
    )


def dataset_stats(sequences, scan_diameter=DEFAULT_SCAN_DIAMETER, bin_width=5.0) -> dict:
    """Everything the ``stats`` report contains, as plain JSON-able data."""
    sequences = list(sequences)
    frames: List[Frame] = [fr for seq in sequences for fr in seq.frames]
    counts = points_vs_distance_counts(frames, bin_width)
    return {
        "num_sequences": len(sequences),
        "num_frames": len(frames),
        "num_instances": sum(len(fr.instances) for fr in frames),
        "scan_diameter": scan_diameter,
        "density": density_profile(frames, scan_diameter).to_dict(),
        "occlusion_histogram": {str(k): v for k, v in occlusion_histogram(frames).items()},
        "crowd_level_histogram": {str(k): v for k, v in crowd_level_histogram(frames).items()},
        "points_vs_distance": [
            {"bin": k, "lo": k * bin_width, "hi": (k + 1) * bin_width,
             "count": n, "mean_points": total / n}
            for k, (n, total) in counts.items()
        ],
    }
