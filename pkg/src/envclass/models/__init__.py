"""Decision tree, random forest and DNN classifiers plus bundle serialization."""

from .bundle import (
    BundleChecksumError,
    BundleError,
    BundleVersionError,
    ModelBundle,
    class_mapping,
    load_bundle,
    save_bundle,
)
from .dnn import Adam, DnnModel, TrainConfig, TrainingError, dnn_forward, dnn_train, loss_and_grads, softmax
from .forest import RandomForestModel, train_random_forest
from .tree import DecisionTreeModel, ModelError, TreeParams, gini_impurity, predict_tree, train_decision_tree

__all__ = [
    "Adam", "BundleChecksumError", "BundleError", "BundleVersionError", "DecisionTreeModel",
    "DnnModel", "ModelBundle", "ModelError", "RandomForestModel", "TrainConfig", "TrainingError",
    "TreeParams", "class_mapping", "dnn_forward", "dnn_train", "gini_impurity", "load_bundle",
    "loss_and_grads", "predict_tree", "save_bundle", "softmax", "train_decision_tree",
    "train_random_forest",
]
