"""On-disk dataset layout: annotations, point clouds, splits, validation.

Layout under a dataset root::

    sequences/<seq_id>.json              one annotation file per sequence
    pointclouds/<seq_id>/<frame:06d>.bin little-endian float32 x, y, z, intensity
    splits.json                          {"train": [...], "val": [...], "test": [...]}

``Frame.pointcloud_ref`` is stored relative to the root.
"""
from __future__ import annotations

import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .core import (
    MIN_ANNOTATED_POINTS,
    NOMINAL_FRAME_PERIOD,
    Box2D,
    Box3D,
    Frame,
    Instance,
    OcclusionLevel,
)

logger = logging.getLogger(__name__)

POINT_DTYPE = np.dtype("<f4")
POINT_RECORD_BYTES = 16
FORMAT_VERSION = 1
MIN_SEQUENCE_FRAMES = 50
MAX_SEQUENCE_FRAMES = 800
TIMESTAMP_JITTER = 0.10


class DatasetError(Exception):
    """Base class for dataset read errors."""


class MalformedFile(DatasetError):
    pass


class SchemaViolation(DatasetError):
    pass


class TruncatedFile(DatasetError):
    pass


class NonFiniteValue(DatasetError):
    def __init__(self, message, record_index):
        super().__init__(message)
        self.record_index = record_index


@dataclass(frozen=True)
class PointCloud:
    """(N, 4) float32 array of x, y, z, intensity."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32).reshape(-1, 4)
        object.__setattr__(self, "points", pts)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class Sequence:
    sequence_id: str
    frames: tuple
    calibration: Optional[np.ndarray] = None
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.calibration is not None:
            cal = np.asarray(self.calibration, dtype=float)
            if cal.size != 12:
                raise ValueError(f"calibration must have 12 entries, got {cal.size}")
            object.__setattr__(self, "calibration", cal.reshape(3, 4))

    def __len__(self):
        return len(self.frames)

    def __eq__(self, other):
        if not isinstance(other, Sequence):
            return NotImplemented
        if (self.calibration is None) != (other.calibration is None):
            return False
        return (self.sequence_id == other.sequence_id and self.frames == other.frames
                and self.meta == other.meta
                and (self.calibration is None or np.array_equal(self.calibration, other.calibration)))

    __hash__ = None


# --------------------------------------------------------------------------
# annotation files

def sequence_path(root, sequence_id: str) -> Path:
    return Path(root) / "sequences" / f"{sequence_id}.json"


def pointcloud_ref(sequence_id: str, frame_index: int) -> str:
    return f"pointclouds/{sequence_id}/{frame_index:06d}.bin"


def _box3d_to_json(b: Box3D) -> dict:
    return b.to_dict()


def sequence_to_dict(seq: Sequence) -> dict:
    frames = []
    for fr in seq.frames:
        frames.append({
            "frame_index": fr.frame_index,
            "timestamp": fr.timestamp,
            "pointcloud": fr.pointcloud_ref,
            "instances": [
                {
                    "track_id": inst.track_id,
                    "box3d": _box3d_to_json(inst.box3d),
                    "box2d": inst.box2d.to_dict() if inst.box2d is not None else None,
                    "occlusion": int(inst.occlusion),
                    "num_points": inst.num_points,
                }
                for inst in fr.instances
            ],
        })
    cal = None if seq.calibration is None else [float(v) for v in seq.calibration.ravel()]
    return {
        "format_version": FORMAT_VERSION,
        "sequence_id": seq.sequence_id,
        "meta": dict(seq.meta),
        "calibration": cal,
        "frames": frames,
    }


def dumps_sequence(seq: Sequence) -> str:
    return json.dumps(sequence_to_dict(seq), indent=1, sort_keys=True) + "\n"


def atomic_write_bytes(path, data: bytes):
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_sequence(seq: Sequence, path) -> Path:
    path = Path(path)
    atomic_write_bytes(path, dumps_sequence(seq).encode("utf-8"))
    return path


class _Reader:
    """Field accessor that reports the JSON path of whatever is wrong."""

    def __init__(self, source: str):
        self.source = source

    def fail(self, where: str, msg: str):
        raise SchemaViolation(f"{self.source}: {where}: {msg}")

    def get(self, obj, key, where, types=None, optional=False):
        if not isinstance(obj, dict):
            self.fail(where, f"expected an object, got {type(obj).__name__}")
        if key not in obj:
            if optional:
                return None
            self.fail(f"{where}.{key}", "missing required field")
        val = obj[key]
        if val is None and optional:
            return None
        if types is not None and (not isinstance(val, types) or isinstance(val, bool)):
            self.fail(f"{where}.{key}", f"expected {_type_names(types)}, got {type(val).__name__}")
        return val

    def number(self, obj, key, where, optional=False):
        return self.get(obj, key, where, (int, float), optional)

    def integer(self, obj, key, where, optional=False):
        return self.get(obj, key, where, int, optional)


def _type_names(types):
    if isinstance(types, tuple):
        return " or ".join(t.__name__ for t in types)
    return types.__name__


def _parse_box3d(r: _Reader, obj, where) -> Box3D:
    vals = {k: r.number(obj, k, where) for k in ("x", "y", "z", "l", "w", "h", "theta")}
    try:
        return Box3D(**vals)
    except ValueError as exc:
        r.fail(where, str(exc))


def _parse_box2d(r: _Reader, obj, where) -> Optional[Box2D]:
    if obj is None:
        return None
    vals = {k: r.number(obj, k, where) for k in ("x", "y", "w", "h")}
    try:
        return Box2D(**vals)
    except ValueError as exc:
        r.fail(where, str(exc))


def _parse_instance(r: _Reader, obj, where) -> Instance:
    track_id = r.integer(obj, "track_id", where)
    if track_id < 0:
        r.fail(f"{where}.track_id", f"must be non-negative, got {track_id}")
    occ = r.integer(obj, "occlusion", where)
    if occ not in (0, 1, 2):
        r.fail(f"{where}.occlusion", f"must be one of 0, 1, 2, got {occ}")
    num_points = r.integer(obj, "num_points", where)
    if num_points < 0:
        r.fail(f"{where}.num_points", f"must be non-negative, got {num_points}")
    box3d = _parse_box3d(r, r.get(obj, "box3d", where, dict), f"{where}.box3d")
    box2d = _parse_box2d(r, r.get(obj, "box2d", where, dict, optional=True), f"{where}.box2d")
    return Instance(track_id=track_id, box3d=box3d, occlusion=OcclusionLevel(occ),
                    num_points=num_points, box2d=box2d)


def sequence_from_dict(obj, source="<memory>") -> Sequence:
    r = _Reader(source)
    if not isinstance(obj, dict):
        r.fail("$", "top level must be an object")
    seq_id = r.get(obj, "sequence_id", "$", str)
    meta = r.get(obj, "meta", "$", dict, optional=True) or {}
    for k, v in meta.items():
        if not isinstance(v, str):
            r.fail(f"$.meta.{k}", f"expected str, got {type(v).__name__}")
    cal = r.get(obj, "calibration", "$", list, optional=True)
    if cal is not None:
        if len(cal) != 12 or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in cal):
            r.fail("$.calibration", "expected 12 numbers (row-major 3x4)")
    frames_raw = r.get(obj, "frames", "$", list)
    frames = []
    for i, fobj in enumerate(frames_raw):
        where = f"$.frames[{i}]"
        idx = r.integer(fobj, "frame_index", where)
        ts = r.number(fobj, "timestamp", where)
        if not math.isfinite(ts):
            r.fail(f"{where}.timestamp", "must be finite")
        ref = r.get(fobj, "pointcloud", where, str)
        insts_raw = r.get(fobj, "instances", where, list)
        insts = [_parse_instance(r, o, f"{where}.instances[{j}]") for j, o in enumerate(insts_raw)]
        frames.append(Frame(frame_index=idx, timestamp=ts, pointcloud_ref=ref, instances=insts))
    return Sequence(sequence_id=seq_id, frames=frames,
                    calibration=None if cal is None else np.array(cal, dtype=float),
                    meta=dict(meta))


def load_sequence(path) -> Sequence:
    """Parse one sequence annotation file. Point clouds are not read."""
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedFile(f"{path}: not UTF-8 text ({exc.reason} at byte {exc.start})") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return sequence_from_dict(obj, source=str(path))


# --------------------------------------------------------------------------
# point clouds

def load_pointcloud(path) -> PointCloud:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) % POINT_RECORD_BYTES:
        raise TruncatedFile(f"{path}: size {len(raw)} is not a multiple of {POINT_RECORD_BYTES}")
    pts = np.frombuffer(raw, dtype=POINT_DTYPE).reshape(-1, 4)
    bad = ~np.isfinite(pts).all(axis=1)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise NonFiniteValue(f"{path}: non-finite value in record {idx}", idx)
    return PointCloud(pts.astype(np.float32))


def pointcloud_bytes(pc: PointCloud) -> bytes:
    return np.ascontiguousarray(pc.points, dtype=POINT_DTYPE).tobytes()


def write_pointcloud(pc: PointCloud, path) -> Path:
    path = Path(path)
    atomic_write_bytes(path, pointcloud_bytes(pc))
    return path


# --------------------------------------------------------------------------
# splits and whole datasets

def write_splits(root, splits: Dict[str, List[str]]) -> Path:
    path = Path(root) / "splits.json"
    data = json.dumps({k: list(v) for k, v in splits.items()}, indent=1, sort_keys=True) + "\n"
    atomic_write_bytes(path, data.encode("utf-8"))
    return path


def load_splits(root) -> Dict[str, List[str]]:
    path = Path(root) / "splits.json"
    if not path.exists():
        return {}
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, dict) or not all(
            isinstance(v, list) and all(isinstance(s, str) for s in v) for v in obj.values()):
        raise SchemaViolation(f"{path}: expected an object mapping split name to a list of sequence ids")
    return obj


def default_splits(sequence_ids, fractions=(0.7, 0.15, 0.15)) -> Dict[str, List[str]]:
    """Split sequence ids in order into train/val/test by the given fractions."""
    ids = list(sequence_ids)
    n = len(ids)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    if n >= 3:
        n_train = min(max(n_train, 1), n - 2)
        n_val = min(max(n_val, 1), n - n_train - 1)
    return {"train": ids[:n_train], "val": ids[n_train:n_train + n_val], "test": ids[n_train + n_val:]}


def list_sequence_ids(root) -> List[str]:
    return sorted(p.stem for p in (Path(root) / "sequences").glob("*.json"))


def load_dataset(root, split: Optional[str] = None) -> Dict[str, Sequence]:
    """Load every sequence (or those of one split), keyed and ordered by id."""
    ids = list_sequence_ids(root)
    if split is not None:
        splits = load_splits(root)
        if split not in splits:
            raise SchemaViolation(f"{root}: unknown split {split!r}")
        wanted = set(splits[split])
        ids = [i for i in ids if i in wanted]
    return {i: load_sequence(sequence_path(root, i)) for i in ids}


# --------------------------------------------------------------------------
# validation

@dataclass
class Issue:
    location: str
    message: str

    def __str__(self):
        return f"{self.location}: {self.message}"


@dataclass
class ValidationReport:
    errors: List[Issue] = field(default_factory=list)
    warnings: List[Issue] = field(default_factory=list)
    sequences_checked: int = 0
    frames_checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, location, message):
        self.errors.append(Issue(str(location), message))

    def warn(self, location, message):
        self.warnings.append(Issue(str(location), message))

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "sequences_checked": self.sequences_checked,
            "frames_checked": self.frames_checked,
            "errors": [str(e) for e in self.errors],
            "warnings": [str(w) for w in self.warnings],
        }


def _check_sequence(seq: Sequence, root: Path, loc: str, report: ValidationReport, check_pointclouds: bool):
    n = len(seq.frames)
    if not MIN_SEQUENCE_FRAMES <= n <= MAX_SEQUENCE_FRAMES:
        report.warn(loc, f"{n} frames, outside [{MIN_SEQUENCE_FRAMES}, {MAX_SEQUENCE_FRAMES}]")
    for k, fr in enumerate(seq.frames):
        floc = f"{loc}:frames[{k}]"
        report.frames_checked += 1
        if k > 0:
            prev = seq.frames[k - 1]
            if fr.frame_index != prev.frame_index + 1:
                report.error(floc, f"frame_index {fr.frame_index} does not follow {prev.frame_index}")
            dt = fr.timestamp - prev.timestamp
            if dt <= 0:
                report.error(floc, f"timestamp {fr.timestamp} not after {prev.timestamp}")
            elif abs(dt - NOMINAL_FRAME_PERIOD) > TIMESTAMP_JITTER * NOMINAL_FRAME_PERIOD:
                report.warn(floc, f"frame spacing {dt:.4f}s deviates >10% from {NOMINAL_FRAME_PERIOD}s")
        seen = set()
        for j, inst in enumerate(fr.instances):
            if inst.track_id in seen:
                report.error(f"{floc}.instances[{j}]", f"duplicate track_id {inst.track_id}")
            seen.add(inst.track_id)
            if inst.num_points < MIN_ANNOTATED_POINTS:
                report.warn(f"{floc}.instances[{j}]",
                            f"num_points={inst.num_points} below {MIN_ANNOTATED_POINTS}")
        pc_path = root / fr.pointcloud_ref
        if not pc_path.is_file():
            report.error(floc, f"missing point cloud {fr.pointcloud_ref}")
        elif check_pointclouds:
            try:
                pc = load_pointcloud(pc_path)
            except DatasetError as exc:
                report.error(floc, str(exc))
            else:
                inten = pc.points[:, 3]
                if inten.size and (inten.min() < 0 or inten.max() > 1):
                    report.warn(floc, "intensity outside [0, 1]")


def validate_dataset(root, check_pointclouds: bool = True) -> ValidationReport:
    """Check a dataset root without modifying anything; problems are collected, not raised."""
    root = Path(root)
    report = ValidationReport()
    seq_dir = root / "sequences"
    if not seq_dir.is_dir():
        report.error(root, "no sequences/ directory")
        return report
    ids = []
    for path in sorted(seq_dir.glob("*.json")):
        loc = f"sequences/{path.name}"
        try:
            seq = load_sequence(path)
        except DatasetError as exc:
            report.error(loc, str(exc))
            continue
        report.sequences_checked += 1
        ids.append(seq.sequence_id)
        if seq.sequence_id != path.stem:
            report.error(loc, f"sequence_id {seq.sequence_id!r} does not match file name")
        _check_sequence(seq, root, loc, report, check_pointclouds)
    try:
        splits = load_splits(root)
    except DatasetError as exc:
        report.error("splits.json", str(exc))
        splits = {}
    known = set(ids)
    for name, members in sorted(splits.items()):
        for sid in members:
            if sid not in known:
                report.error("splits.json", f"split {name!r} references unknown sequence {sid!r}")
    return report
