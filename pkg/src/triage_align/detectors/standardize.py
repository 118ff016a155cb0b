"""Per-feature z-score standardization for stable detector training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..alerts import AlertStream


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray  # constant features carry std 1 so they transform to 0

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.means.shape[0]:
            raise ValueError(
                f"feature dimension {X.shape[-1]} does not match "
                f"standardizer dimension {self.means.shape[0]}"
            )
        return (X - self.means) / self.stds


def fit_standardizer(stream: AlertStream) -> Standardizer:
    if len(stream) == 0:
        raise ValueError("cannot fit a standardizer on an empty stream")
    means = stream.X.mean(axis=0)
    stds = stream.X.std(axis=0)  # population std
    stds = np.where(stds == 0.0, 1.0, stds)
    return Standardizer(means=means, stds=stds)
