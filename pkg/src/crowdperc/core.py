"""Domain types and box/trajectory geometry shared by every module.

Conventions:
    * Sensor frame: +x forward, +y left, +z up, meters.
    * Yaw ``theta`` is counterclockwise about +z, zero along +x, normalized
      to (-pi, pi].
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

#: annotated pedestrians have at least this many LiDAR points in real data
MIN_ANNOTATED_POINTS = 15
#: nominal annotation period, seconds (2.5 Hz)
NOMINAL_FRAME_PERIOD = 0.4


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    t = math.remainder(float(theta), 2.0 * math.pi)
    if t <= -math.pi:
        t += 2.0 * math.pi
    return t


class DistanceMode(str, enum.Enum):
    """How center distance is measured."""

    EUCLID_3D = "3d"
    BEV_2D = "bev"

    @classmethod
    def parse(cls, value) -> "DistanceMode":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


class OcclusionLevel(enum.IntEnum):
    """0: fully visible, 1: at most half occluded, 2: more than half occluded."""

    NONE = 0
    PARTIAL = 1
    HEAVY = 2


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box: center (x, y, z), extents (l, w, h), yaw theta."""

    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    theta: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.l, self.w, self.h, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box field in {vals}")
        if self.l <= 0 or self.w <= 0 or self.h <= 0:
            raise ValueError(f"box extents must be positive, got l={self.l}, w={self.w}, h={self.h}")
        for name in ("x", "y", "z", "l", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def center_bev(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.l, self.w, self.h, self.theta])

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "z": self.z,
                "l": self.l, "w": self.w, "h": self.h, "theta": self.theta}


@dataclass(frozen=True)
class Box2D:
    """Image box in pixels; (x, y) is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"2D box size must be positive, got w={self.w}, h={self.h}")
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass(frozen=True)
class Instance:
    """One annotated pedestrian in one frame."""

    track_id: int
    box3d: Box3D
    occlusion: OcclusionLevel = OcclusionLevel.NONE
    num_points: int = 0
    box2d: Optional[Box2D] = None

    def __post_init__(self):
        if int(self.track_id) < 0:
            raise ValueError(f"track_id must be non-negative, got {self.track_id}")
        if int(self.num_points) < 0:
            raise ValueError(f"num_points must be non-negative, got {self.num_points}")
        object.__setattr__(self, "track_id", int(self.track_id))
        object.__setattr__(self, "num_points", int(self.num_points))
        object.__setattr__(self, "occlusion", OcclusionLevel(self.occlusion))


@dataclass(frozen=True)
class Frame:
    frame_index: int
    timestamp: float
    pointcloud_ref: str
    instances: Tuple[Instance, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "timestamp", float(self.timestamp))

    def centers_bev(self) -> np.ndarray:
        """(N, 2) array of instance BEV centers."""
        if not self.instances:
            return np.zeros((0, 2))
        return np.array([[i.box3d.x, i.box3d.y] for i in self.instances])


@dataclass(frozen=True)
class Detection:
    box3d: Box3D
    score: float
    velocity: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"detection score must be finite, got {self.score}")
        object.__setattr__(self, "score", float(self.score))
        if self.velocity is not None:
            vx, vy = (float(v) for v in self.velocity)
            if not (math.isfinite(vx) and math.isfinite(vy)):
                raise ValueError(f"velocity must be finite, got {self.velocity}")
            object.__setattr__(self, "velocity", (vx, vy))


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered 2D positions of one agent."""

    track_id: int
    points: Tuple[Tuple[float, Tuple[float, float]], ...] = field(default_factory=tuple)

    def __post_init__(self):
        pts = tuple((float(t), (float(p[0]), float(p[1]))) for t, p in self.points)
        if not pts:
            raise ValueError("trajectory needs at least one point")
        for (t0, _), (t1, _) in zip(pts, pts[1:]):
            if not t1 > t0:
                raise ValueError(f"trajectory timestamps must strictly increase ({t0} -> {t1})")
        object.__setattr__(self, "points", pts)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([t for t, _ in self.points])

    @property
    def positions(self) -> np.ndarray:
        return np.array([p for _, p in self.points])

    def __len__(self):
        return len(self.points)


def center_distance(a: Box3D, b: Box3D, mode=DistanceMode.EUCLID_3D) -> float:
    """Distance between box centers in meters.

    ``mode`` selects full 3D Euclidean distance or ground-plane (x, y) distance.
    """
    mode = DistanceMode.parse(mode)
    if mode is DistanceMode.BEV_2D:
        return math.hypot(a.x - b.x, a.y - b.y)
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


def pairwise_center_distances(a: Sequence[Box3D], b: Sequence[Box3D], mode=DistanceMode.EUCLID_3D) -> np.ndarray:
    """(len(a), len(b)) matrix of center distances."""
    mode = DistanceMode.parse(mode)
    cols = 2 if mode is DistanceMode.BEV_2D else 3
    ca = np.array([[bx.x, bx.y, bx.z] for bx in a], dtype=float).reshape(-1, 3)[:, :cols]
    cb = np.array([[bx.x, bx.y, bx.z] for bx in b], dtype=float).reshape(-1, 3)[:, :cols]
    diff = ca[:, None, :] - cb[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def rotation_2d(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def box_corners_bev(b: Box3D) -> np.ndarray:
    """Footprint corners as a (4, 2) array, counterclockwise from front-right."""
    hl, hw = b.l / 2.0, b.w / 2.0
    local = np.array([[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]])
    return local @ rotation_2d(b.theta).T + np.array([b.x, b.y])


def box_corners_3d(b: Box3D) -> np.ndarray:
    """(8, 3) corners: bottom face then top face, each counterclockwise."""
    bev = box_corners_bev(b)
    z0, z1 = b.z - b.h / 2.0, b.z + b.h / 2.0
    return np.vstack([np.column_stack([bev, np.full(4, z0)]),
                      np.column_stack([bev, np.full(4, z1)])])
