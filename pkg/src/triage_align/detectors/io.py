"""Versioned JSON persistence for detector models.

Persisted models let simulations re-run without retraining. The document
carries everything needed to reproduce predictions exactly: weights/trees,
the standardizer, the training config, and the seed.
"""

from __future__ import annotations

import json

import numpy as np

from .forest import ForestModel, Tree
from .logistic import LogisticModel, TrainingDiagnostics
from .standardize import Standardizer

FORMAT_VERSION = 1


def model_to_dict(model) -> dict:
    if isinstance(model, LogisticModel):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "logreg",
            "weights": model.weights.tolist(),
            "bias": model.bias,
            "l2_lambda": model.l2_lambda,
            "standardizer": {
                "means": model.standardizer.means.tolist(),
                "stds": model.standardizer.stds.tolist(),
            },
        }
    if isinstance(model, ForestModel):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "forest",
            "n_trees": model.n_trees,
            "max_depth": model.max_depth,
            "min_samples_leaf": model.min_samples_leaf,
            "features_per_split": model.features_per_split,
            "rng_seed": model.rng_seed,
            "n_features": model.n_features,
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                }
                for t in model.trees
            ],
        }
    raise TypeError(f"cannot serialize model of type {type(model).__name__}")


def model_from_dict(doc: dict):
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {version!r}")
    kind = doc.get("kind")
    if kind == "logreg":
        std = Standardizer(
            means=np.asarray(doc["standardizer"]["means"], dtype=np.float64),
            stds=np.asarray(doc["standardizer"]["stds"], dtype=np.float64),
        )
        return LogisticModel(
            weights=np.asarray(doc["weights"], dtype=np.float64),
            bias=float(doc["bias"]),
            standardizer=std,
            l2_lambda=float(doc["l2_lambda"]),
            diagnostics=TrainingDiagnostics(),
        )
    if kind == "forest":
        trees = [
            Tree(
                feature=np.asarray(t["feature"], dtype=np.int32),
                threshold=np.asarray(t["threshold"], dtype=np.float64),
                left=np.asarray(t["left"], dtype=np.int32),
                right=np.asarray(t["right"], dtype=np.int32),
                value=np.asarray(t["value"], dtype=np.float64),
            )
            for t in doc["trees"]
        ]
        return ForestModel(
            trees=trees,
            n_trees=int(doc["n_trees"]),
            max_depth=int(doc["max_depth"]),
            min_samples_leaf=int(doc["min_samples_leaf"]),
            features_per_split=int(doc["features_per_split"]),
            rng_seed=int(doc["rng_seed"]),
            n_features=int(doc["n_features"]),
        )
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
