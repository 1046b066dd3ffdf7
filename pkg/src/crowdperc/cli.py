"""Command-line entry point: ``crowdperc <subcommand> ...``.

Exit codes: 0 success, 1 invalid data (validation errors, unreadable or
inconsistent inputs), 2 usage errors (bad flags, missing input paths).
Reports are canonical JSON (sorted keys) written atomically, so identical
inputs, config and seed give byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional

from . import crowd_stats, interchange, synth
from .config import ConfigError, RunConfig, load_config
from .dataset_io import DatasetError, atomic_write_bytes, load_dataset, load_pointcloud, validate_dataset
from .dha import ContainerError, decode_peaks, read_pyramid, render_targets, write_pyramid
from .evaluation import EvalReport, clear_mot, detection_metrics, greedy_velocity_tracker, prediction_metrics
from .evaluation.detection import precision_recall
from .postprocess import circle_nms, filter_min_points

logger = logging.getLogger("crowdperc")

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2
THREADS_ENV = "CROWDPERC_THREADS"


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers

def _threads(args) -> int:
    n = args.threads
    if n is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                n = int(env)
            except ValueError:
                raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}")
        else:
            n = 1
    if n < 1:
        raise UsageError(f"thread count must be >= 1, got {n}")
    return n


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.distance_mode is not None:
        cfg = cfg.replace(distance_mode=args.distance_mode)
    return cfg


def _require(path, kind="path") -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{kind} does not exist: {path}")
    return p


def _flatten(prefix, obj, rows):
    if isinstance(obj, dict):
        for k in sorted(obj, key=str):
            _flatten(f"{prefix}.{k}" if prefix else str(k), obj[k], rows)
    elif isinstance(obj, list):
        rows.append((prefix, json.dumps(obj)))
    else:
        rows.append((prefix, "" if obj is None else obj))


def _csv_text(report: dict) -> str:
    """Two-column metric,value table of every numeric section (protocol/config omitted)."""
    rows = []
    for key in sorted(report):
        if key not in ("protocol", "config"):
            _flatten(key, report[key], rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])
    for name, value in rows:
        w.writerow([name, repr(value) if isinstance(value, float) else value])
    return buf.getvalue()


def _emit(report: dict, out: Optional[str]):
    """JSON to ``out`` (plus a CSV sibling) or to stdout."""
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    atomic_write_bytes(path, text.encode("utf-8"))
    atomic_write_bytes(path.with_suffix(".csv"), _csv_text(report).encode("utf-8"))


def _provenance(args, cfg: RunConfig, **inputs) -> dict:
    return {"run": dict(inputs, seed=args.seed), **cfg.to_dict()}


def _load_gt(root, split) -> Dict[str, object]:
    seqs = load_dataset(_require(root, "dataset root"), split)
    if not seqs:
        raise DatasetError(f"no sequences found under {root}" + (f" for split {split!r}" if split else ""))
    return seqs


def _aligned(gt_seqs, preds, what="predictions"):
    """Yield (sequence, per-frame predictions); missing sequences count as empty."""
    extra = sorted(set(preds) - set(gt_seqs))
    if extra:
        raise DatasetError(f"{what} reference unknown sequences: {', '.join(extra)}")
    for sid in sorted(gt_seqs):
        seq = gt_seqs[sid]
        frames = preds.get(sid, [[] for _ in seq.frames])
        if len(frames) != len(seq.frames):
            raise DatasetError(f"{what} for {sid} have {len(frames)} frames, ground truth has {len(seq.frames)}")
        yield seq, frames


# --------------------------------------------------------------------------
# subcommands

def cmd_validate(args) -> int:
    report = validate_dataset(_require(args.root, "dataset root"), check_pointclouds=not args.skip_pointclouds)
    for issue in report.errors:
        print(f"error: {issue}", file=sys.stderr)
    for issue in report.warnings:
        print(f"warning: {issue}", file=sys.stderr)
    _emit(report.to_dict(), args.out)
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_stats(args) -> int:
    cfg = _config(args)
    seqs = _load_gt(args.root, args.split)
    ordered = [seqs[k] for k in sorted(seqs)]
    stats = crowd_stats.dataset_stats(ordered, scan_diameter=args.scan_diameter, bin_width=args.bin_width)
    stats["config"] = _provenance(args, cfg, split=args.split, scan_diameter=args.scan_diameter,
                                  bin_width=args.bin_width)
    _emit(stats, args.out)
    if args.plots:
        from . import plots
        frames = [fr for s in ordered for fr in s.frames]
        d = Path(args.plots)
        plots.plot_points_vs_distance(crowd_stats.points_vs_distance(frames, args.bin_width), args.bin_width,
                                      d / "points_vs_distance.png")
        plots.plot_histogram(crowd_stats.crowd_level_histogram(frames), d / "crowd_levels.png", "crowd level")
        plots.plot_histogram(crowd_stats.occlusion_histogram(frames), d / "occlusion_levels.png",
                             "occlusion level")
    return EXIT_OK


def cmd_gen_synth(args) -> int:
    overrides = {}
    if args.scene_config:
        try:
            overrides = json.loads(_require(args.scene_config, "scene config").read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.scene_config}: invalid JSON: {exc.msg}") from exc
        for reserved in ("level", "seed"):
            if reserved in overrides:
                raise ConfigError(f"scene config may not set '{reserved}'; use --{reserved}")
    if args.duration is not None:
        overrides["duration"] = args.duration
    try:
        n = _threads(args)
        pool = ThreadPoolExecutor(n) if n > 1 else None
        try:
            ids = synth.write_synthetic_dataset(args.out, args.level, args.seed, args.num_sequences,
                                                executor=pool, **overrides)
        finally:
            if pool is not None:
                pool.shutdown()
    except TypeError as exc:
        raise ConfigError(f"bad scene config: {exc}") from exc
    for sid in ids:
        print(sid)
    return EXIT_OK


def cmd_render_targets(args) -> int:
    cfg = _config(args)
    seqs = _load_gt(args.root, None)
    if args.sequence not in seqs:
        raise UsageError(f"unknown sequence {args.sequence!r}")
    seq = seqs[args.sequence]
    if not 0 <= args.frame < len(seq.frames):
        raise UsageError(f"frame {args.frame} out of range 0..{len(seq.frames) - 1}")
    _, dets = synth.perfect_detections(seq)[args.frame]
    frame = seq.frames[args.frame]
    vel = {inst.track_id: d.velocity for inst, d in zip(frame.instances, dets)}
    pyr = render_targets(frame.instances, cfg.grid, cfg.targets, vel)
    write_pyramid(pyr, args.out)
    if pyr.skipped:
        print(f"note: {pyr.skipped} instance(s) outside the grid were skipped", file=sys.stderr)
    if args.plots:
        from . import plots
        plots.plot_heatmap_pyramid(pyr, Path(args.plots) / f"{args.sequence}_{args.frame:06d}_heatmaps.png")
    return EXIT_OK


def cmd_decode(args) -> int:
    cfg = _config(args)
    pyr = read_pyramid(_require(args.input, "container"), cfg.grid)
    dets = decode_peaks(pyr, cfg.decode.k_max, cfg.decode.score_thresh, cfg.decode.agg_weight)
    text = interchange.dumps(interchange.predictions_to_dict({args.sequence_id: [dets]}))
    atomic_write_bytes(args.out, text.encode("utf-8"))
    return EXIT_OK


def cmd_nms(args) -> int:
    cfg = _config(args)
    preds = interchange.load_predictions(_require(args.pred, "predictions file"))
    seqs = _load_gt(args.root, None) if args.root else None
    out = {}
    for sid, frames in preds.items():
        kept = []
        for k, fr in enumerate(frames):
            dets = circle_nms(fr, cfg.nms.radius)
            if seqs is not None:
                if sid not in seqs or k >= len(seqs[sid].frames):
                    raise DatasetError(f"no point cloud for {sid} frame {k}")
                pc = load_pointcloud(Path(args.root) / seqs[sid].frames[k].pointcloud_ref)
                dets = filter_min_points(dets, pc, cfg.nms.min_points)
            kept.append(dets)
        out[sid] = kept
    if seqs is None:
        print("note: no --root given; min-points filtering skipped", file=sys.stderr)
    atomic_write_bytes(args.out, interchange.dumps(interchange.predictions_to_dict(out)).encode("utf-8"))
    return EXIT_OK


def cmd_eval_det(args) -> int:
    cfg = _config(args)
    seqs = _load_gt(args.gt, args.split)
    preds = interchange.load_predictions(_require(args.pred, "predictions file"))
    gt_frames, det_frames = [], []
    for seq, frames in _aligned(seqs, preds):
        gt_frames.extend(seq.frames)
        det_frames.extend(frames)
    m = detection_metrics(gt_frames, det_frames, cfg.thresholds, cfg.distance_mode)
    rep = EvalReport(ap=m["ap"], map=m["map"], ar=m["ar"], thresholds=cfg.thresholds,
                     track_threshold=cfg.track_threshold, distance_mode=cfg.distance_mode.value,
                     extra={"counts": {"gt": sum(len(f.instances) for f in gt_frames),
                                       "detections": sum(len(f) for f in det_frames),
                                       "frames": len(gt_frames),
                                       "missing_sequences": sorted(set(seqs) - set(preds))}})
    _emit(rep.to_dict(_provenance(args, cfg, split=args.split)), args.out)
    if args.plots:
        from . import plots
        curves = {}
        for d in cfg.thresholds:
            _, precision, recall, _ = precision_recall(gt_frames, det_frames, d, cfg.distance_mode)
            curves[d] = (precision, recall)
        plots.plot_pr_curves(curves, Path(args.plots) / "pr_curves.png")
    return EXIT_OK


def cmd_eval_track(args) -> int:
    cfg = _config(args)
    seqs = _load_gt(args.gt, args.split)
    if args.run_tracker:
        dets = interchange.load_predictions(_require(args.pred, "detections file"))
    else:
        tracks = interchange.load_tracks(_require(args.pred, "tracks file"))
    totals = dict(fp=0, fn=0, ids=0, gt=0, mt=0, ml=0, tracks=0)
    for seq, frames in _aligned(seqs, dets if args.run_tracker else tracks, "tracks"):
        gt = [[(i.track_id, i.box3d) for i in fr.instances] for fr in seq.frames]
        if args.run_tracker:
            pred = greedy_velocity_tracker([(fr.timestamp, d) for fr, d in zip(seq.frames, frames)],
                                           cfg.tracker.threshold, cfg.tracker.max_misses)
        else:
            pred = [[(tid, d.box3d) for tid, d in fr] for fr in frames]
        r = clear_mot(gt, pred, cfg.track_threshold, cfg.distance_mode)
        for k in ("fp", "fn", "ids", "gt"):
            totals[k] += getattr(r, k)
        # mt/ml are fractions of tracks; undo the division to pool sequences
        totals["mt"] += round(r.mt * r.num_tracks) if r.num_tracks else 0
        totals["ml"] += round(r.ml * r.num_tracks) if r.num_tracks else 0
        totals["tracks"] += r.num_tracks
    n_gt, n_tr = totals["gt"], totals["tracks"]
    mota = float(1 - Fraction(totals["fp"] + totals["ids"] + totals["fn"], n_gt)) if n_gt else float("nan")
    rep = EvalReport(mota=mota, mt=totals["mt"] / n_tr if n_tr else float("nan"),
                     ml=totals["ml"] / n_tr if n_tr else float("nan"),
                     ids=totals["ids"], fp=totals["fp"], fn=totals["fn"], thresholds=cfg.thresholds,
                     track_threshold=cfg.track_threshold, distance_mode=cfg.distance_mode.value,
                     extra={"counts": {"gt_boxes": n_gt, "gt_tracks": n_tr}})
    _emit(rep.to_dict(_provenance(args, cfg, split=args.split, run_tracker=args.run_tracker)), args.out)
    return EXIT_OK


def cmd_eval_pred(args) -> int:
    cfg = _config(args)
    gts = interchange.load_trajectories(_require(args.gt, "ground-truth trajectories"))
    preds = interchange.load_trajectories(_require(args.pred, "predicted trajectories"))
    try:
        m = prediction_metrics(preds, gts)
    except ValueError as exc:
        raise DatasetError(str(exc)) from exc
    rep = EvalReport(fde=m["fde"], mde=m["mde"], thresholds=cfg.thresholds,
                     track_threshold=cfg.track_threshold, distance_mode=cfg.distance_mode.value,
                     extra={"counts": {"trajectories": m["num_trajectories"], "missing": m["missing"]}})
    _emit(rep.to_dict(_provenance(args, cfg)), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON run config overriding defaults")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default ${THREADS_ENV} or 1)")
    p.add_argument("--distance-mode", choices=("3d", "bev"), default=None,
                   help="center distance for matching (default from config: 3d)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdperc", description="Crowd perception toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("validate", help="check a dataset root for schema and consistency problems")
    p.add_argument("root")
    p.add_argument("--skip-pointclouds", action="store_true", help="do not open point-cloud files")
    p.add_argument("--out", help="write the JSON report here (CSV alongside)")
    _common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="crowd density, occlusion and points-vs-distance statistics")
    p.add_argument("root")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--bin-width", type=float, default=5.0)
    p.add_argument("--scan-diameter", type=float, default=crowd_stats.DEFAULT_SCAN_DIAMETER)
    p.add_argument("--out")
    p.add_argument("--plots", metavar="DIR", help="render PNG figures into DIR")
    _common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gen-synth", help="generate a synthetic crowded dataset")
    p.add_argument("--level", type=int, choices=(0, 1, 2, 3), required=True)
    p.add_argument("--out", required=True, help="dataset root to create")
    p.add_argument("--num-sequences", type=int, default=4)
    p.add_argument("--duration", type=float, default=None, help="seconds per sequence")
    p.add_argument("--scene-config", help="JSON object of scene parameter overrides")
    _common(p)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("render-targets", help="render heatmap/regression targets of one frame")
    p.add_argument("root")
    p.add_argument("--sequence", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", required=True, help="output tensor container")
    p.add_argument("--plots", metavar="DIR")
    _common(p)
    p.set_defaults(func=cmd_render_targets)

    p = sub.add_parser("decode", help="decode a heatmap container into detections")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--sequence-id", default="decoded")
    _common(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("nms", help="circle NMS plus min-points filtering of predictions")
    p.add_argument("--pred", required=True)
    p.add_argument("--root", help="dataset root for point-cloud lookups")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("eval-det", help="AP per threshold, mAP and occlusion-stratified AR")
    p.add_argument("--gt", required=True, help="dataset root")
    p.add_argument("--pred", required=True)
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--out")
    p.add_argument("--plots", metavar="DIR")
    _common(p)
    p.set_defaults(func=cmd_eval_det)

    p = sub.add_parser("eval-track", help="CLEAR MOT metrics")
    p.add_argument("--gt", required=True, help="dataset root")
    p.add_argument("--pred", required=True, help="tracks file, or detections with --run-tracker")
    p.add_argument("--run-tracker", action="store_true", help="track detections with the baseline tracker first")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--out")
    _common(p)
    p.set_defaults(func=cmd_eval_track)

    p = sub.add_parser("eval-pred", help="final and mean displacement errors")
    p.add_argument("--gt", required=True, help="ground-truth trajectories file")
    p.add_argument("--pred", required=True)
    p.add_argument("--out")
    _common(p)
    p.set_defaults(func=cmd_eval_pred)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, ConfigError, ContainerError, synth.ConfigInvalid, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
