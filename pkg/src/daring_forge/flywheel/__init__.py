"""Annotation flywheel: filtering, dedup, simulated annotator, iteration loop."""

from ..hashing import hamming, phash64 as perceptual_hash
from .filters import FilterThresholds, Verdict, filter_chain
from .annotator import SimAnnotator, feature_router, pretrain_biased
from .loop import (
    AccuracyReport,
    FlywheelError,
    FlywheelState,
    PoolRecord,
    build_pool,
    dedup_insert,
    evaluate_annotator,
    initialize_state,
    run_flywheel,
    run_iteration,
    select_categories,
)

__all__ = [
    "perceptual_hash",
    "hamming",
    "FilterThresholds",
    "Verdict",
    "filter_chain",
    "SimAnnotator",
    "feature_router",
    "pretrain_biased",
    "AccuracyReport",
    "FlywheelError",
    "FlywheelState",
    "PoolRecord",
    "build_pool",
    "dedup_insert",
    "evaluate_annotator",
    "initialize_state",
    "run_flywheel",
    "run_iteration",
    "select_categories",
]
