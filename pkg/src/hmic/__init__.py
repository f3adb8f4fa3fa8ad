"""Anomalous-sound detection with hierarchical metadata constraints.

Self-supervised dual-head classification (section IDs constrain a low-level
feature, attribute groups a high-level one) with anomaly scores from the
minimum Mahalanobis distance to attribute-group centres.
"""

from .config import RunConfig
from .dsp import DspConfig, LogMelSpectrogram, Waveform, log_mel
from .evaluation import EvalReport, ScoredClip, auc, build_report, harmonic_total, pauc
from .metadata import (
    AttributeGroupKey,
    ClipMeta,
    LabelSpace,
    assign_labels,
    build_label_space,
    parse_dcase_filename,
)
from .model import FeaturePair, LossBreakdown, ModelConfig, ModelParams, forward_features
from .scoring import CentreModel, ScoreRecord, fit_agc, fit_dc, mahalanobis, score_agc, score_dc
from .training import TrainConfig, gradient_check, train

__version__ = "0.1.0"

__all__ = [
    "AttributeGroupKey",
    "CentreModel",
    "ClipMeta",
    "DspConfig",
    "EvalReport",
    "FeaturePair",
    "LabelSpace",
    "LogMelSpectrogram",
    "LossBreakdown",
    "ModelConfig",
    "ModelParams",
    "RunConfig",
    "ScoreRecord",
    "ScoredClip",
    "TrainConfig",
    "Waveform",
    "assign_labels",
    "auc",
    "build_label_space",
    "build_report",
    "fit_agc",
    "fit_dc",
    "forward_features",
    "gradient_check",
    "harmonic_total",
    "log_mel",
    "mahalanobis",
    "parse_dcase_filename",
    "pauc",
    "score_agc",
    "score_dc",
    "train",
]
