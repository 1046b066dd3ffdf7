"""Density-aware hierarchical heatmap aggregation: attention, targets, loss, decoding."""
from .attention import (
    AttentionWeights,
    BudgetExceeded,
    FeatureMap,
    Level,
    attention_matrix,
    softmax_rows,
    spatial_attention,
)
from .container import (
    ContainerError,
    read_attention_weights,
    read_pyramid,
    write_attention_weights,
    write_pyramid,
)
from .decode import count_peaks, decode_peaks, local_maxima, sample_bilinear
from .targets import (
    REG_CHANNELS,
    GaussianTargetParams,
    HeatmapPyramid,
    ShapeMismatch,
    gaussian_focal_loss,
    render_targets,
)

__all__ = [
    "AttentionWeights", "BudgetExceeded", "FeatureMap", "Level", "attention_matrix",
    "softmax_rows", "spatial_attention", "ContainerError", "read_attention_weights",
    "read_pyramid", "write_attention_weights", "write_pyramid", "count_peaks",
    "decode_peaks", "local_maxima", "sample_bilinear", "REG_CHANNELS",
    "GaussianTargetParams", "HeatmapPyramid", "ShapeMismatch", "gaussian_focal_loss",
    "render_targets",
]
