"""Synthetic crowded LiDAR scenes with ground truth in the dataset layout.

Walkers are 0.6 m x 1.7 m cylinders moving in groups behind a leader, all
around a 360-degree sensor that keeps a small clear disc around itself. Each
frame samples points on the sensor-facing half of every body with a budget
falling off as 1/d^2, removes points hidden behind nearer bodies (angular
shadowing from the sensor), and annotates bodies that keep at least 15 points.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .core import (
    MIN_ANNOTATED_POINTS,
    Box2D,
    Box3D,
    Detection,
    Frame,
    Instance,
    OcclusionLevel,
)
from .dataset_io import (
    PointCloud,
    Sequence,
    default_splits,
    pointcloud_ref,
    sequence_path,
    write_pointcloud,
    write_sequence,
    write_splits,
)
from .postprocess import points_in_box_mask

logger = logging.getLogger(__name__)

BODY_RADIUS = 0.3
BODY_HEIGHT = 1.7
#: walkers per scene for each crowd level (inclusive)
LEVEL_WALKERS = {0: (5, 9), 1: (12, 19), 2: (22, 29), 3: (34, 44)}
#: group sizes (inclusive) per crowd level when the config does not set them
LEVEL_GROUP_SIZES = {0: (1, 2), 1: (1, 3), 2: (2, 4), 3: (2, 5)}
OCCLUSION_PARTIAL = 0.10
OCCLUSION_HEAVY = 0.50
MIN_SPACING = 0.7
#: group members may stray this far outside the walking region
REGION_MARGIN = 1.5
#: leaders closer than this to the region edge steer back inwards
EDGE_SOFT = 3.0
#: maximum heading change per step when steering away from an edge, rad
MAX_TURN = 0.25
#: smallest allowed sensor keep-out radius; bodies must never touch the sensor
MIN_KEEP_OUT = 1.0
IMAGE_SIZE = (1280, 720)


class ConfigInvalid(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    level: int = 1
    seed: int = 0
    duration: float = 20.0
    frame_rate: float = 2.5
    group_size_range: Optional[Tuple[int, int]] = None
    speed_range: Tuple[float, float] = (0.6, 1.6)
    heading_noise: float = 0.15
    sensor_origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    ground_z: float = -1.8
    x_range: Tuple[float, float] = (-29.0, 29.0)
    y_range: Tuple[float, float] = (-18.0, 18.0)
    point_budget: float = 40000.0
    max_points: int = 600
    ground_points: int = 1000
    num_walkers: Optional[int] = None
    #: walkers stay at least this far (m, BEV) from the sensor
    keep_out_radius: float = 4.0

    def validate(self):
        if self.level not in LEVEL_WALKERS:
            raise ConfigInvalid(f"level must be 0..3, got {self.level}")
        if not self.frame_rate > 0:
            raise ConfigInvalid(f"frame_rate must be positive, got {self.frame_rate}")
        if not self.duration > 0:
            raise ConfigInvalid(f"duration must be positive, got {self.duration}")
        lo, hi = self.group_sizes
        if not 1 <= lo <= hi:
            raise ConfigInvalid(f"bad group_size_range {self.group_size_range}")
        slo, shi = self.speed_range
        if not 0 <= slo <= shi:
            raise ConfigInvalid(f"bad speed_range {self.speed_range}")
        if self.x_range[1] <= self.x_range[0] or self.y_range[1] <= self.y_range[0]:
            raise ConfigInvalid("empty walking region")
        if not self.keep_out_radius >= MIN_KEEP_OUT:
            raise ConfigInvalid(f"keep_out_radius must be >= {MIN_KEEP_OUT} m, got {self.keep_out_radius}")
        ox, oy = self.sensor_origin[:2]
        far = max(math.hypot(x - ox, y - oy) for x in self.x_range for y in self.y_range)
        if far < self.keep_out_radius + 2.0:
            raise ConfigInvalid("walking region lies (almost) entirely inside the sensor keep-out disc")
        if self.num_walkers is not None and self.num_walkers < 0:
            raise ConfigInvalid(f"num_walkers must be >= 0, got {self.num_walkers}")
        return self

    @property
    def group_sizes(self) -> Tuple[int, int]:
        if self.group_size_range is not None:
            return tuple(self.group_size_range)
        return LEVEL_GROUP_SIZES.get(self.level, (1, 1))

    @property
    def num_frames(self) -> int:
        return int(round(self.duration * self.frame_rate))

    def to_dict(self):
        return asdict(self)


@dataclass
class SceneResult:
    sequence: Sequence
    pointclouds: List[PointCloud]
    #: per frame, (W, 2) BEV positions of every walker, annotated or not
    walker_positions: List[np.ndarray] = field(default_factory=list)
    #: per frame, (W,) shadowed fraction of every walker
    shadow_fractions: List[np.ndarray] = field(default_factory=list)


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def shadow_fractions(positions: np.ndarray, origin=(0.0, 0.0), radius: float = BODY_RADIUS) -> np.ndarray:
    """Fraction of each disc's angular extent (seen from ``origin``) covered by nearer discs."""
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 2) - np.asarray(origin[:2], dtype=np.float64)
    n = len(pos)
    d = np.hypot(pos[:, 0], pos[:, 1])
    az = np.arctan2(pos[:, 1], pos[:, 0])
    half = np.arcsin(np.minimum(radius / d, 1.0))
    out = np.zeros(n)
    for i in range(n):
        nearer = np.flatnonzero(d < d[i])
        if len(nearer) == 0:
            continue
        rel = _wrap(az[nearer] - az[i])
        lo = np.maximum(rel - half[nearer], -half[i])
        hi = np.minimum(rel + half[nearer], half[i])
        ok = hi > lo
        if not ok.any():
            continue
        segs = sorted(zip(lo[ok], hi[ok]))
        covered = 0.0
        cur_lo, cur_hi = segs[0]
        for a, b in segs[1:]:
            if a > cur_hi:
                covered += cur_hi - cur_lo
                cur_lo, cur_hi = a, b
            else:
                cur_hi = max(cur_hi, b)
        covered += cur_hi - cur_lo
        out[i] = covered / (2 * half[i])
    return out


def occlusion_from_fraction(frac: float) -> OcclusionLevel:
    if frac < OCCLUSION_PARTIAL:
        return OcclusionLevel.NONE
    if frac < OCCLUSION_HEAVY:
        return OcclusionLevel.PARTIAL
    return OcclusionLevel.HEAVY


def default_calibration() -> np.ndarray:
    """3x4 projection of a forward-looking 1280x720 camera at the LiDAR origin."""
    k = np.array([[700.0, 0.0, 640.0], [0.0, 700.0, 360.0], [0.0, 0.0, 1.0]])
    # lidar (x fwd, y left, z up) -> camera (x right, y down, z fwd)
    r = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    return k @ np.hstack([r, np.zeros((3, 1))])


def project_box2d(box: Box3D, calib: np.ndarray) -> Optional[Box2D]:
    from .core import box_corners_3d

    corners = np.hstack([box_corners_3d(box), np.ones((8, 1))])
    cam = corners @ calib.T
    if np.any(cam[:, 2] <= 0.1):
        return None
    uv = cam[:, :2] / cam[:, 2:3]
    w, h = IMAGE_SIZE
    x0, y0 = np.clip(uv.min(axis=0), 0, [w, h])
    x1, y1 = np.clip(uv.max(axis=0), 0, [w, h])
    if x1 - x0 < 1 or y1 - y0 < 1:
        return None
    return Box2D(float(x0), float(y0), float(x1 - x0), float(y1 - y0))


class _Crowd:
    """Group-structured walker state."""

    def __init__(self, cfg: SceneConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        lo, hi = LEVEL_WALKERS[cfg.level]
        n = cfg.num_walkers if cfg.num_walkers is not None else int(rng.integers(lo, hi + 1))
        sizes = []
        while sum(sizes) < n:
            sizes.append(int(rng.integers(cfg.group_sizes[0], cfg.group_sizes[1] + 1)))
        sizes[-1] -= sum(sizes) - n
        sizes = [s for s in sizes if s > 0]
        self.group_of = np.repeat(np.arange(len(sizes)), sizes)
        self.leaders = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
        self.origin = np.asarray(cfg.sensor_origin[:2], dtype=np.float64)
        self.pos = np.zeros((n, 2))
        self.offset = np.zeros((n, 2))
        self.heading = rng.uniform(-np.pi, np.pi, len(sizes))
        self.speed = rng.uniform(*cfg.speed_range, len(sizes))
        self._place(sizes)
        self.yaw = np.repeat(self.heading, sizes)

    def _place(self, sizes):
        cfg, rng = self.cfg, self.rng
        placed = []
        k = 0
        for g, size in enumerate(sizes):
            for _ in range(1000):
                leader = np.array([rng.uniform(*cfg.x_range), rng.uniform(*cfg.y_range)])
                offs = [np.zeros(2)]
                for _ in range(size - 1):
                    ang = rng.uniform(-np.pi, np.pi)
                    offs.append(rng.uniform(0.8, 1.4) * np.array([np.cos(ang), np.sin(ang)]))
                cand = [leader + o for o in offs]
                if min(np.hypot(*(c - self.origin)) for c in cand) < cfg.keep_out_radius + 0.3:
                    continue
                pts = placed + cand
                arr = np.array(pts)
                dd = np.hypot(*(arr[:, None, :] - arr[None, :, :]).transpose(2, 0, 1))
                np.fill_diagonal(dd, np.inf)
                if dd.min(initial=np.inf) >= MIN_SPACING + 0.1:
                    break
            placed.extend(cand)
            self.offset[k:k + size] = offs
            k += size
        self.pos = self._keep_out(np.array(placed).reshape(-1, 2))

    def step(self, dt: float):
        cfg, rng = self.cfg, self.rng
        self.heading = _wrap(self.heading + rng.normal(0.0, cfg.heading_noise, len(self.heading)))
        self._steer_inwards()
        vel = self.speed[:, None] * np.column_stack([np.cos(self.heading), np.sin(self.heading)])
        lead = self.pos[self.leaders] + vel * dt
        self.offset += rng.normal(0.0, 0.03, self.offset.shape)
        self.offset[self.leaders] = 0.0
        norm = np.hypot(self.offset[:, 0], self.offset[:, 1])
        members = norm > 0
        scale = np.ones_like(norm)
        scale[members] = np.clip(norm[members], 0.6, 1.5) / norm[members]
        self.offset *= scale[:, None]
        new = lead[self.group_of] + self.offset
        new = self._keep_out(self._separate(new))
        new[:, 0] = np.clip(new[:, 0], cfg.x_range[0] - REGION_MARGIN, cfg.x_range[1] + REGION_MARGIN)
        new[:, 1] = np.clip(new[:, 1], cfg.y_range[0] - REGION_MARGIN, cfg.y_range[1] + REGION_MARGIN)
        self.offset = new - new[self.leaders][self.group_of]
        self.offset[self.leaders] = 0.0
        self.pos = new
        self.yaw = self.heading[self.group_of]

    def _steer_inwards(self):
        # gradual turns keep paths close to constant velocity; an instant
        # reflection at the edge would look like a teleport to a tracker
        cfg = self.cfg
        lead = self.pos[self.leaders]
        cx, cy = np.mean(cfg.x_range), np.mean(cfg.y_range)
        gap = np.minimum.reduce([lead[:, 0] - cfg.x_range[0], cfg.x_range[1] - lead[:, 0],
                                 lead[:, 1] - cfg.y_range[0], cfg.y_range[1] - lead[:, 1]])
        want = np.arctan2(cy - lead[:, 1], cx - lead[:, 0])
        diff = _wrap(want - self.heading)
        steer = (gap < EDGE_SOFT) & (np.abs(diff) > np.pi / 2)
        self.heading = np.where(steer, _wrap(self.heading + np.clip(diff, -MAX_TURN, MAX_TURN)),
                                self.heading)
        # the same gradual turn away from the sensor keep-out disc
        rel = lead - self.origin
        away = np.arctan2(rel[:, 1], rel[:, 0])
        diff = _wrap(away - self.heading)
        near = np.hypot(rel[:, 0], rel[:, 1]) < cfg.keep_out_radius + EDGE_SOFT
        steer = near & (np.abs(diff) > np.pi / 2)
        self.heading = np.where(steer, _wrap(self.heading + np.clip(diff, -MAX_TURN, MAX_TURN)),
                                self.heading)

    def _keep_out(self, pos):
        rel = pos - self.origin
        d = np.hypot(rel[:, 0], rel[:, 1])
        inside = d < self.cfg.keep_out_radius
        if inside.any():
            scale = self.cfg.keep_out_radius / np.maximum(d[inside], 1e-9)
            pos = pos.copy()
            pos[inside] = self.origin + rel[inside] * scale[:, None]
        return pos

    def _separate(self, pos):
        for _ in range(5):
            diff = pos[:, None, :] - pos[None, :, :]
            dd = np.hypot(diff[..., 0], diff[..., 1])
            np.fill_diagonal(dd, 1e9)
            close = dd < MIN_SPACING
            if not close.any():
                break
            push = np.where(close, (MIN_SPACING - dd) / 2.0 / np.maximum(dd, 1e-9), 0.0)
            pos = pos + (diff * push[..., None]).sum(axis=1)
        return pos


def _body_points(center, dist_xy, n, cfg, rng):
    """``n`` points on the sensor-facing half of a body cylinder."""
    face = math.atan2(-dist_xy[1], -dist_xy[0])
    ang = face + rng.uniform(-np.pi / 2, np.pi / 2, n)
    r = BODY_RADIUS * 0.995
    xs = center[0] + r * np.cos(ang)
    ys = center[1] + r * np.sin(ang)
    zs = cfg.ground_z + rng.uniform(0.0, BODY_HEIGHT, n)
    return np.column_stack([xs, ys, zs, rng.uniform(0.0, 1.0, n)])


def render_frame(positions: np.ndarray, cfg: SceneConfig, rng: np.random.Generator):
    """Point cloud (N, 4) and per-walker shadowed fractions for one frame."""
    origin = np.asarray(cfg.sensor_origin[:2], dtype=np.float64)
    rel = positions - origin
    d = np.hypot(rel[:, 0], rel[:, 1])
    az = np.arctan2(rel[:, 1], rel[:, 0])
    half = np.arcsin(np.minimum(BODY_RADIUS / d, 1.0))
    chunks = []
    for i in range(len(positions)):
        n = int(min(cfg.max_points, math.floor(cfg.point_budget / d[i] ** 2)))
        if n <= 0:
            continue
        pts = _body_points(positions[i], rel[i], n, cfg, rng)
        nearer = np.flatnonzero(d < d[i])
        if len(nearer):
            paz = np.arctan2(pts[:, 1] - origin[1], pts[:, 0] - origin[0])
            rel_az = _wrap(paz[:, None] - az[nearer][None, :])
            hidden = (np.abs(rel_az) < half[nearer][None, :]).any(axis=1)
            pts = pts[~hidden]
        chunks.append(pts)
    if cfg.ground_points:
        g = cfg.ground_points
        chunks.append(np.column_stack([
            rng.uniform(cfg.x_range[0] - 1.0, cfg.x_range[1] + 1.0, g),
            rng.uniform(cfg.y_range[0] - 1.0, cfg.y_range[1] + 1.0, g),
            cfg.ground_z - rng.uniform(0.02, 0.1, g),
            rng.uniform(0.0, 1.0, g),
        ]))
    cloud = np.vstack(chunks) if chunks else np.zeros((0, 4))
    return cloud.astype(np.float32), shadow_fractions(positions, origin)


def generate_scene(cfg: SceneConfig, sequence_id: Optional[str] = None) -> SceneResult:
    """Simulate one sequence. Output is fully determined by ``cfg`` (including its seed)."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    seq_id = sequence_id or f"synth_l{cfg.level}_s{cfg.seed}"
    crowd = _Crowd(cfg, rng)
    calib = default_calibration()
    dt = 1.0 / cfg.frame_rate
    frames, clouds, positions, shadows = [], [], [], []
    for k in range(cfg.num_frames):
        if k:
            crowd.step(dt)
        cloud, shadow = render_frame(crowd.pos, cfg, rng)
        insts = []
        for w in range(len(crowd.pos)):
            box = Box3D(crowd.pos[w, 0], crowd.pos[w, 1], cfg.ground_z + BODY_HEIGHT / 2,
                        2 * BODY_RADIUS, 2 * BODY_RADIUS, BODY_HEIGHT, crowd.yaw[w])
            num = int(points_in_box_mask(cloud, box).sum()) if len(cloud) else 0
            if num < MIN_ANNOTATED_POINTS:
                continue
            insts.append(Instance(track_id=w, box3d=box, occlusion=occlusion_from_fraction(shadow[w]),
                                  num_points=num, box2d=project_box2d(box, calib)))
        frames.append(Frame(frame_index=k, timestamp=k / cfg.frame_rate,
                            pointcloud_ref=pointcloud_ref(seq_id, k), instances=insts))
        clouds.append(PointCloud(cloud))
        positions.append(crowd.pos.copy())
        shadows.append(shadow)
    meta = {"weather": "clear", "scene": "synthetic", "crowd_level": str(cfg.level)}
    seq = Sequence(sequence_id=seq_id, frames=frames, calibration=calib, meta=meta)
    return SceneResult(seq, clouds, positions, shadows)


def sequence_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def write_synthetic_dataset(root, level: int, seed: int, num_sequences: int = 4, executor=None,
                            **overrides) -> List[str]:
    """Generate ``num_sequences`` scenes and write the full dataset layout under ``root``."""
    root = Path(root)
    cfgs = [SceneConfig(level=level, seed=sequence_seed(seed, k), **overrides).validate()
            for k in range(num_sequences)]
    ids = [f"synth_l{level}_s{seed}_{k:03d}" for k in range(num_sequences)]

    def build(args):
        cfg, sid = args
        scene = generate_scene(cfg, sid)
        for fr, pc in zip(scene.sequence.frames, scene.pointclouds):
            write_pointcloud(pc, root / fr.pointcloud_ref)
        write_sequence(scene.sequence, sequence_path(root, sid))
        return sid

    jobs = list(zip(cfgs, ids))
    if executor is None:
        done = [build(j) for j in jobs]
    else:
        done = list(executor.map(build, jobs))
    write_splits(root, default_splits(done))
    return done


def perfect_detections(seq: Sequence) -> List[Tuple[float, List[Detection]]]:
    """Ground truth as unit-score detections with finite-difference velocities.

    Velocity is the backward difference to the track's previous frame, or the
    forward difference at a track's first frame.
    """
    last: Dict[int, Tuple[float, float, float]] = {}
    vel: Dict[Tuple[int, int], Tuple[float, float]] = {}
    for k, fr in enumerate(seq.frames):
        for inst in fr.instances:
            b = inst.box3d
            if inst.track_id in last:
                t0, x0, y0 = last[inst.track_id]
                dt = fr.timestamp - t0
                vel[(k, inst.track_id)] = ((b.x - x0) / dt, (b.y - y0) / dt)
            last[inst.track_id] = (fr.timestamp, b.x, b.y)
    nxt: Dict[int, Tuple[float, float, float]] = {}
    for k in range(len(seq.frames) - 1, -1, -1):
        fr = seq.frames[k]
        for inst in fr.instances:
            b = inst.box3d
            if (k, inst.track_id) not in vel and inst.track_id in nxt:
                t1, x1, y1 = nxt[inst.track_id]
                dt = t1 - fr.timestamp
                vel[(k, inst.track_id)] = ((x1 - b.x) / dt, (y1 - b.y) / dt)
            nxt[inst.track_id] = (fr.timestamp, b.x, b.y)
    out = []
    for k, fr in enumerate(seq.frames):
        dets = [Detection(inst.box3d, 1.0, vel.get((k, inst.track_id), (0.0, 0.0))) for inst in fr.instances]
        out.append((fr.timestamp, dets))
    return out
