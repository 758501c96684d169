from .binning import MAX_BINS, BinMapper
from .ensemble import (
    Dataset,
    DegenerateLabels,
    EnsembleModel,
    ShapeMismatch,
    log_loss,
    predict_proba,
)
from .forest import ForestParams, train_random_forest
from .gbdt import LEAF_LAMBDA, GbdtParams, train_gbdt
from .io import FormatVersionMismatch, deserialize, load_model, save_model, serialize
from .tree import Tree

__all__ = [
    "MAX_BINS",
    "BinMapper",
    "Dataset",
    "DegenerateLabels",
    "EnsembleModel",
    "ShapeMismatch",
    "log_loss",
    "predict_proba",
    "ForestParams",
    "train_random_forest",
    "LEAF_LAMBDA",
    "GbdtParams",
    "train_gbdt",
    "FormatVersionMismatch",
    "deserialize",
    "load_model",
    "save_model",
    "serialize",
    "Tree",
]
