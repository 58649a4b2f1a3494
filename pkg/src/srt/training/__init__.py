"""End-to-end optimization of the scene encoder/decoder."""

from .losses import reconstruction_loss, cross_entropy
from .sampling import RayBatch, sample_rays
from .loop import (TrainConfig, TrainState, TrainingError, lr_schedule,
                   train_step, fit, save_state, load_state)
from .semantic import train_semantic_head

__all__ = [
    "reconstruction_loss", "cross_entropy", "RayBatch", "sample_rays",
    "TrainConfig", "TrainState", "TrainingError", "lr_schedule",
    "train_step", "fit", "save_state", "load_state", "train_semantic_head",
]
