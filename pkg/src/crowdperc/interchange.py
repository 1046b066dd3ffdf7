"""JSON interchange for predictions, tracks and trajectories.

Predictions map each sequence id to a list of frames, each frame a list of
detections::

    {"seq_a": [[{"box3d": {...}, "score": 0.9, "velocity": [vx, vy]}, ...], ...]}

Track files use the same layout with an extra integer ``track_id`` per
detection. Trajectory files hold
``{"trajectories": [{"track_id": 3, "points": [[t, x, y], ...]}, ...]}``.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from .core import Box3D, Detection, Trajectory
from .dataset_io import MalformedFile, SchemaViolation, _parse_box3d, _Reader

DetFrames = List[List[Detection]]
TrackFrames = List[List[Tuple[int, Detection]]]


def _read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def detection_to_dict(d: Detection, track_id=None) -> dict:
    out = {"box3d": d.box3d.to_dict(), "score": d.score,
           "velocity": None if d.velocity is None else list(d.velocity)}
    if track_id is not None:
        out["track_id"] = int(track_id)
    return out


def _parse_detection(r: _Reader, obj, where, with_id: bool):
    box = _parse_box3d(r, r.get(obj, "box3d", where, dict), f"{where}.box3d")
    score = r.number(obj, "score", where)
    vel = r.get(obj, "velocity", where, list, optional=True)
    if vel is not None and (len(vel) != 2 or not all(isinstance(v, (int, float)) for v in vel)):
        r.fail(f"{where}.velocity", "expected [vx, vy]")
    try:
        det = Detection(box, score, None if vel is None else tuple(vel))
    except ValueError as exc:
        r.fail(where, str(exc))
    if not with_id:
        return det
    tid = r.integer(obj, "track_id", where)
    return tid, det


def _parse_frames(obj, source, with_id: bool) -> Dict[str, list]:
    r = _Reader(source)
    if not isinstance(obj, dict):
        r.fail("$", "top level must be an object keyed by sequence id")
    out = {}
    for sid in sorted(obj):
        frames = r.get(obj, sid, "$", list)
        parsed = []
        for k, fr in enumerate(frames):
            if not isinstance(fr, list):
                r.fail(f"$.{sid}[{k}]", "expected a list of detections")
            parsed.append([_parse_detection(r, d, f"$.{sid}[{k}][{j}]", with_id) for j, d in enumerate(fr)])
        out[sid] = parsed
    return out


def predictions_from_dict(obj, source="<memory>") -> Dict[str, DetFrames]:
    return _parse_frames(obj, source, with_id=False)


def tracks_from_dict(obj, source="<memory>") -> Dict[str, TrackFrames]:
    return _parse_frames(obj, source, with_id=True)


def load_predictions(path) -> Dict[str, DetFrames]:
    return predictions_from_dict(_read_json(path), str(path))


def load_tracks(path) -> Dict[str, TrackFrames]:
    return tracks_from_dict(_read_json(path), str(path))


def predictions_to_dict(preds: Dict[str, Sequence[Sequence[Detection]]]) -> dict:
    return {sid: [[detection_to_dict(d) for d in fr] for fr in frames] for sid, frames in preds.items()}


def tracks_to_dict(tracks: Dict[str, Sequence[Sequence[Tuple[int, Detection]]]]) -> dict:
    return {sid: [[detection_to_dict(d, tid) for tid, d in fr] for fr in frames]
            for sid, frames in tracks.items()}


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def trajectories_to_dict(trajs: Sequence[Trajectory]) -> dict:
    return {"trajectories": [{"track_id": t.track_id, "points": [[ts, x, y] for ts, (x, y) in t.points]}
                             for t in trajs]}


def trajectories_from_dict(obj, source="<memory>") -> List[Trajectory]:
    r = _Reader(source)
    items = r.get(obj, "trajectories", "$", list)
    out = []
    for i, it in enumerate(items):
        where = f"$.trajectories[{i}]"
        tid = r.integer(it, "track_id", where)
        pts = r.get(it, "points", where, list)
        rows = []
        for j, p in enumerate(pts):
            if (not isinstance(p, list) or len(p) != 3
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in p)
                    or not all(math.isfinite(v) for v in p)):
                r.fail(f"{where}.points[{j}]", "expected [t, x, y] with finite numbers")
            rows.append((p[0], (p[1], p[2])))
        try:
            out.append(Trajectory(tid, tuple(rows)))
        except ValueError as exc:
            r.fail(where, str(exc))
    ids = [t.track_id for t in out]
    if len(set(ids)) != len(ids):
        raise SchemaViolation(f"{source}: duplicate track ids in trajectories")
    return out


def load_trajectories(path) -> List[Trajectory]:
    return trajectories_from_dict(_read_json(path), str(path))
