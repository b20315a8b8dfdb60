"""Text-conditioned pixel diffusion with group-decomposed attention supervision."""

from .schedule import NoiseSchedule, add_noise
from .attention import (
    AttentionBundle,
    as_bundles,
    cross_attention,
    decompose_attention,
    downsample_mask,
)
from .losses import combined_loss, hola_loss, rlw_weights
from .model import CondUNet, ModelConfig, TokenEmbedding
from .training import (
    TrainConfig,
    Trainer,
    TrainingDiverged,
    collate_batch,
    compute_losses,
    load_checkpoint,
)
from .sampling import sample

__all__ = [
    "NoiseSchedule",
    "add_noise",
    "AttentionBundle",
    "as_bundles",
    "cross_attention",
    "decompose_attention",
    "downsample_mask",
    "combined_loss",
    "hola_loss",
    "rlw_weights",
    "CondUNet",
    "ModelConfig",
    "TokenEmbedding",
    "TrainConfig",
    "Trainer",
    "TrainingDiverged",
    "collate_batch",
    "compute_losses",
    "load_checkpoint",
    "sample",
]
