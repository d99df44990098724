"""Sublearner pool: two gradient-boosted-tree variants and an MLP."""

from .base import (
    DEFAULT_HYPERPARAMETERS,
    FORMAT_VERSION,
    KINDS,
    SublearnerSpec,
    TrainedSublearner,
    predict,
    train_sublearner,
)
from .gbdt import DegenerateTarget, train_gbdt
from .mlp import train_mlp

__all__ = [
    "DEFAULT_HYPERPARAMETERS", "FORMAT_VERSION", "KINDS", "SublearnerSpec",
    "TrainedSublearner", "predict", "train_sublearner", "DegenerateTarget",
    "train_gbdt", "train_mlp",
]
