"""Detection, tracking and prediction metrics."""
from .detection import (
    DEFAULT_THRESHOLDS,
    MisalignedFrames,
    average_precision,
    average_recall_occlusion,
    detection_metrics,
    interpolated_ap,
    mean_ap,
    precision_recall,
)
from .matching import MatchResult, match_detections
from .prediction import LengthMismatch, MisalignedTimestamps, fde, mde, prediction_metrics
from .report import EvalReport
from .tracking import ClearMotResult, clear_mot, greedy_velocity_tracker

__all__ = [
    "DEFAULT_THRESHOLDS", "MisalignedFrames", "average_precision", "average_recall_occlusion",
    "detection_metrics", "interpolated_ap", "mean_ap", "precision_recall", "MatchResult",
    "match_detections", "LengthMismatch", "MisalignedTimestamps", "fde", "mde",
    "prediction_metrics", "EvalReport", "ClearMotResult", "clear_mot", "greedy_velocity_tracker",
]
