"""Detection models producing raw posterior probabilities per alert."""

from __future__ import annotations

from ..alerts import AlertStream
from .forest import ForestConfig, ForestModel, Tree, train_forest
from .io import load_model, model_from_dict, model_to_dict, save_model
from .logistic import LogisticModel, LogregConfig, TrainingDiagnostics, train_logreg
from .standardize import Standardizer, fit_standardizer

__all__ = [
    "ForestConfig",
    "ForestModel",
    "LogisticModel",
    "LogregConfig",
    "Standardizer",
    "TrainingDiagnostics",
    "Tree",
    "fit_standardizer",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "predict",
    "save_model",
    "train_forest",
    "train_logreg",
]


def predict(model, stream: AlertStream) -> list[tuple[str, float]]:
    """Score every alert in order: one (id, p_malicious) pair per alert.

    Read-only pass over the stream; the model is never updated.
    """
    if stream.n_features != _model_dim(model):
        raise ValueError(
            f"stream has {stream.n_features} features but the model "
            f"expects {_model_dim(model)}"
        )
    scores = model.predict(stream.X)
    return list(zip(stream.ids, (float(s) for s in scores)))


def _model_dim(model) -> int:
    if isinstance(model, LogisticModel):
        return model.weights.shape[0]
    if isinstance(model, ForestModel):
        return model.n_features
    raise TypeError(f"unknown model type {type(model).__name__}")
