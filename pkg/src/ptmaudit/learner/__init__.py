"""Four-layer MLP classifier, its losses, training and evaluation."""

from .losses import (
    bce_loss,
    cross_entropy_loss,
    joint_loss,
    multisupcon_loss,
    supcon_loss,
)
from .mlp import MlpModel, forward, load_model, predict, predict_topk, save_model
from .train import (
    KFoldResult,
    LabeledDataset,
    Metrics,
    TrainConfig,
    TrainingError,
    TrainReport,
    evaluate,
    kfold,
    split_train_eval,
    train,
)

__all__ = [
    "KFoldResult",
    "LabeledDataset",
    "Metrics",
    "MlpModel",
    "TrainConfig",
    "TrainReport",
    "TrainingError",
    "bce_loss",
    "cross_entropy_loss",
    "evaluate",
    "forward",
    "joint_loss",
    "kfold",
    "load_model",
    "multisupcon_loss",
    "predict",
    "predict_topk",
    "save_model",
    "split_train_eval",
    "supcon_loss",
    "train",
]
