"""L2-regularized logistic regression trained by full-batch gradient descent.

Loss is mean binary cross-entropy plus (l2_lambda/2)*||w||^2 with the bias
unregularized; the mean formulation makes the optimum invariant to
duplicating every training row. Backtracking line search guarantees
monotone descent, so training is deterministic and needs no learning-rate
tuning.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..alerts import AlertStream
from .standardize import Standardizer, fit_standardizer

logger = logging.getLogger(__name__)

PROB_EPS = 1e-12  # predictions are clipped into the open interval (0, 1)


@dataclass
class LogregConfig:
    l2_lambda: float = 1e-4
    max_iters: int = 5000
    tol: float = 1e-8
    seed: int = 0  # kept for interface uniformity; zero-init needs no RNG


@dataclass
class TrainingDiagnostics:
    losses: list[float] = field(default_factory=list)
    final_grad_norm: float = float("inf")
    n_iters: int = 0
    converged: bool = False


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    standardizer: Standardizer
    l2_lambda: float
    diagnostics: TrainingDiagnostics | None = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        z = self.standardizer.transform(X) @ self.weights + self.bias
        return np.clip(_sigmoid(z), PROB_EPS, 1.0 - PROB_EPS)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _loss(Xs, y, w, b, lam):
    z = Xs @ w + b
    # mean BCE: softplus(z) - y*z, computed stably
    bce = np.mean(np.logaddexp(0.0, z) - y * z)
    return bce + 0.5 * lam * float(w @ w)


def _gradient(Xs, y, w, b, lam):
    p = _sigmoid(Xs @ w + b)
    r = (p - y) / len(y)
    gw = Xs.T @ r + lam * w
    gb = r.sum()
    return gw, gb


def train_logreg(stream: AlertStream, config: LogregConfig | None = None) -> LogisticModel:
    """Fit weights minimizing the regularized loss to grad-norm <= tol.

    Raises on single-class data. Non-convergence within max_iters is logged
    with the final gradient norm and the best iterate is still returned.
    """
    config = config or LogregConfig()
    if len(stream) == 0:
        raise ValueError("cannot train on an empty stream")
    n_pos = int(stream.y.sum())
    if n_pos == 0 or n_pos == len(stream):
        raise ValueError("training data contains a single class")

    standardizer = fit_standardizer(stream)
    Xs = standardizer.transform(stream.X)
    y = stream.y.astype(np.float64)
    lam = float(config.l2_lambda)

    w = np.zeros(Xs.shape[1])
    b = float(np.log(n_pos / (len(stream) - n_pos)))  # prior log-odds

    diag = TrainingDiagnostics()
    f = _loss(Xs, y, w, b, lam)
    diag.losses.append(f)
    step = 1.0
    for it in range(config.max_iters):
        gw, gb = _gradient(Xs, y, w, b, lam)
        gnorm2 = float(gw @ gw) + gb * gb
        diag.final_grad_norm = float(np.sqrt(gnorm2))
        diag.n_iters = it
        if diag.final_grad_norm <= config.tol:
            diag.converged = True
            break
        # Armijo backtracking, warm-started from twice the last accepted step
        step = min(step * 2.0, 1e6)
        accepted = False
        for _ in range(80):
            w_new = w - step * gw
            b_new = b - step * gb
            f_new = _loss(Xs, y, w_new, b_new, lam)
            if f_new <= f - 1e-4 * step * gnorm2:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # step underflowed: gradient is numerically flat, stop here
            break
        w, b, f = w_new, b_new, f_new
        diag.losses.append(f)

    if not diag.converged:
        logger.warning(
            "logistic training stopped after %d iterations without reaching "
            "tol=%.1e (final gradient norm %.3e)",
            diag.n_iters,
            config.tol,
            diag.final_grad_norm,
        )
    return LogisticModel(
        weights=w,
        bias=float(b),
        standardizer=standardizer,
        l2_lambda=lam,
        diagnostics=diag,
    )
