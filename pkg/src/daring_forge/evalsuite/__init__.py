"""Metrics and ablation harness."""

from .semantic import EvalSample, SemanticReport, sample_eval_attrs, semantic_accuracy
from .attention_metrics import attention_iou, argmax_in_mask_rate, otsu_threshold
from .distance import feature_distance, image_set_features
from .ablation import ABLATION_CONFIGS, AblationResult, ablation_run, make_train_config

__all__ = [
    "EvalSample",
    "SemanticReport",
    "sample_eval_attrs",
    "semantic_accuracy",
    "attention_iou",
    "argmax_in_mask_rate",
    "otsu_threshold",
    "feature_distance",
    "image_set_features",
    "ABLATION_CONFIGS",
    "AblationResult",
    "ablation_run",
    "make_train_config",
]
