from .core import (
    BOOSTED_KINDS, DEFAULT_HYPERPARAMETERS, KINDS, TREE_KINDS, ModelError, ModelFileError, ModelSpec,
    TrainedModel, load, member_seed, predict, predict_scores, save, train,
)
from .tree import Tree

__all__ = [
    "BOOSTED_KINDS", "DEFAULT_HYPERPARAMETERS", "KINDS", "TREE_KINDS", "ModelError", "ModelFileError",
    "ModelSpec", "TrainedModel", "Tree", "load", "member_seed", "predict", "predict_scores", "save", "train",
]
