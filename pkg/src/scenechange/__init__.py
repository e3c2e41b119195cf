"""Zero-shot scene change detection on segmentation foundation-model features.

Typical use::

    from scenechange import PipelineConfig, detect_changes, make_backend
    result = detect_changes(img_t0, img_t1, PipelineConfig(), make_backend("synthetic"))
    result.mask  # bool (H, W)
"""

from .backbone import BackendUnavailable, SyntheticBackend, make_backend
from .bench import EvalReport, emit_report, run_eval, run_protocol, score_external
from .config import MatchParams, PipelineConfig, load_config
from .data import DatasetManifest, load_dataset
from .matching import ChangeMask, detect_changes, gim_filter, ssm_filter
from .metrics import MetricRow, confusion, metric_row, temporal_consistency
from .pseudomask import PseudoMask, SimilarityMap, ThresholdParams, generate_pseudomask
from .registration import RansacConfig, Transform, estimate_transform

__version__ = "0.1.0"

__all__ = [
    "BackendUnavailable",
    "ChangeMask",
    "DatasetManifest",
    "EvalReport",
    "MatchParams",
    "MetricRow",
    "PipelineConfig",
    "PseudoMask",
    "RansacConfig",
    "SimilarityMap",
    "SyntheticBackend",
    "ThresholdParams",
    "Transform",
    "confusion",
    "detect_changes",
    "emit_report",
    "estimate_transform",
    "generate_pseudomask",
    "gim_filter",
    "load_config",
    "load_dataset",
    "make_backend",
    "metric_row",
    "run_eval",
    "run_protocol",
    "score_external",
    "ssm_filter",
    "temporal_consistency",
]
