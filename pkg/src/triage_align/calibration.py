"""Post-hoc probability calibration and reliability diagnostics.

Two calibrators map raw detector scores to probabilities that better match
empirical frequencies: a two-parameter sigmoid fit by penalized maximum
likelihood (suited to the logistic detector) and isotonic regression via
pool-adjacent-violators (suited to the forest). Reliability tables quantify
miscalibration as expected calibration error (ECE) over equal-width bins.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlattCalibrator:
    """Sigmoid recalibration p_cal = 1 / (1 + exp(a*s + b)).

    The map is increasing in the raw score s when a < 0, which is what
    fitting on informative scores produces.
    """

    a: float
    b: float

    def apply(self, scores: np.ndarray) -> np.ndarray:
        z = -(self.a * np.asarray(scores, dtype=np.float64) + self.b)
        return _sigmoid(z)

    def to_dict(self) -> dict:
        return {"kind": "platt", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class IsotonicCalibrator:
    """Monotone nonparametric recalibration.

    Knots are the distinct raw scores seen at fit time; values are the
    pooled non-decreasing block means. Evaluation interpolates linearly
    between knots and clamps outside them, so plateaus in the fit do not
    create artificial ties at decision thresholds.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def apply(self, scores: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(scores, dtype=np.float64), self.breakpoints, self.values)

    def to_dict(self) -> dict:
        return {
            "kind": "isotonic",
            "breakpoints": self.breakpoints.tolist(),
            "values": self.values.tolist(),
        }


def calibrator_from_dict(doc: dict):
    kind = doc.get("kind")
    if kind == "platt":
        return PlattCalibrator(a=float(doc["a"]), b=float(doc["b"]))
    if kind == "isotonic":
        return IsotonicCalibrator(
            breakpoints=np.asarray(doc["breakpoints"], dtype=np.float64),
            values=np.asarray(doc["values"], dtype=np.float64),
        )
    raise ValueError(f"unknown calibrator kind {kind!r}")


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _split_pairs(pairs):
    scores = np.asarray([p[0] for p in pairs], dtype=np.float64)
    labels = np.asarray([p[1] for p in pairs], dtype=np.float64)
    return scores, labels


def platt_nll(a: float, b: float, scores: np.ndarray, targets: np.ndarray) -> float:
    """Negative log-likelihood of smoothed targets under the sigmoid map."""
    q = a * scores + b
    # with p = 1/(1+e^q):  nll_i = log(1+e^q) - (1-t)*q
    return float(np.sum(np.logaddexp(0.0, q) - (1.0 - targets) * q))


def smoothed_targets(labels: np.ndarray) -> np.ndarray:
    """Shrunk 0/1 targets: positives (N+ + 1)/(N+ + 2), negatives 1/(N- + 2)."""
    n_pos = float(labels.sum())
    n_neg = float(len(labels) - n_pos)
    t_pos = (n_pos + 1.0) / (n_pos + 2.0)
    t_neg = 1.0 / (n_neg + 2.0)
    return np.where(labels > 0.5, t_pos, t_neg)


def fit_platt(pairs, max_iters: int = 100, tol: float = 1e-10) -> PlattCalibrator:
    """Fit (a, b) by Newton iteration on the smoothed-target likelihood."""
    if len(pairs) < 4:
        raise ValueError("sigmoid calibration needs at least 4 pairs")
    scores, labels = _split_pairs(pairs)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise ValueError("calibration data contains a single class")
    targets = smoothed_targets(labels)

    a = 0.0
    b = float(np.log((len(labels) - n_pos + 1.0) / (n_pos + 1.0)))
    f = platt_nll(a, b, scores, targets)
    converged = False
    for _ in range(max_iters):
        q = a * scores + b
        p = _sigmoid(-q)
        grad_q = targets - p  # d nll / d q_i
        ga = float(np.dot(grad_q, scores))
        gb = float(grad_q.sum())
        if max(abs(ga), abs(gb)) <= tol:
            converged = True
            break
        w = p * (1.0 - p)
        haa = float(np.dot(w, scores * scores)) + 1e-12
        hab = float(np.dot(w, scores))
        hbb = float(w.sum()) + 1e-12
        det = haa * hbb - hab * hab
        if det <= 0:
            logger.warning("sigmoid calibration Hessian not positive definite; stopping")
            break
        da = -(hbb * ga - hab * gb) / det
        db = -(-hab * ga + haa * gb) / det
        # backtrack until the objective decreases
        step = 1.0
        improved = False
        for _ in range(40):
            fa, fb = a + step * da, b + step * db
            f_new = platt_nll(fa, fb, scores, targets)
            if f_new < f + 1e-12:
                a, b, f = fa, fb, f_new
                improved = True
                break
            step *= 0.5
        if not improved:
            converged = True  # no descent direction left: at the optimum
            break
    if not converged:
        logger.warning("sigmoid calibration did not converge; returning best iterate")
    return PlattCalibrator(a=a, b=b)


def fit_isotonic(pairs) -> IsotonicCalibrator:
    """Monotone least-squares fit of labels on scores via PAVA.

    Ties in the raw score are pre-averaged into a single weighted block.
    Fitted block values are recomputed as exact pooled means (label sum over
    count) once pooling settles.
    """
    if len(pairs) < 2:
        raise ValueError("isotonic calibration needs at least 2 pairs")
    scores, labels = _split_pairs(pairs)
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    y = labels[order]

    # merge equal scores into weighted blocks
    knots, starts = np.unique(s, return_index=True)
    bounds = np.append(starts, len(s))
    block_sum = np.array([y[bounds[i]:bounds[i + 1]].sum() for i in range(len(knots))])
    block_n = (bounds[1:] - bounds[:-1]).astype(np.float64)

    # pool adjacent violators over (sum, n) blocks
    sums: list[float] = []
    ns: list[float] = []
    hi: list[int] = []  # exclusive end index of each block in knot order
    for i in range(len(knots)):
        sums.append(float(block_sum[i]))
        ns.append(float(block_n[i]))
        hi.append(i + 1)
        while len(sums) > 1 and sums[-2] * ns[-1] >= sums[-1] * ns[-2]:
            # previous mean >= current mean: pool (compare via cross products)
            sums[-2] += sums[-1]
            ns[-2] += ns[-1]
            hi[-2] = hi[-1]
            sums.pop()
            ns.pop()
            hi.pop()

    values = np.empty(len(knots), dtype=np.float64)
    lo = 0
    for block_idx in range(len(sums)):
        values[lo:hi[block_idx]] = sums[block_idx] / ns[block_idx]
        lo = hi[block_idx]
    return IsotonicCalibrator(breakpoints=knots, values=values)


def calibrate(calibrator, raw_scores) -> list[float]:
    """Map raw scores in [0, 1] through a fitted calibrator, order-preserving."""
    scores = np.asarray(list(raw_scores), dtype=np.float64)
    if scores.size and (scores.min() < 0.0 or scores.max() > 1.0):
        raise ValueError("raw scores must lie in [0, 1]")
    return [float(v) for v in np.atleast_1d(calibrator.apply(scores))]


@dataclass(frozen=True)
class ReliabilityBin:
    bin_low: float
    bin_high: float
    mean_confidence: float
    empirical_frequency: float
    count: int


@dataclass(frozen=True)
class ReliabilityTable:
    bins: list[ReliabilityBin]
    ece: float
    n: int


def reliability(pairs, n_bins: int = 10) -> ReliabilityTable:
    """Equal-width reliability table over [0, 1] with aggregate ECE.

    Bins are right-open except the last, which is right-closed at 1. Empty
    bins report count 0 and do not enter the ECE sum.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    if len(pairs) == 0:
        raise ValueError("reliability needs at least one (score, label) pair")
    scores, labels = _split_pairs(pairs)
    if scores.min() < 0.0 or scores.max() > 1.0:
        raise ValueError("scores must lie in [0, 1]")

    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.minimum((scores * n_bins).astype(int), n_bins - 1)
    n = len(scores)
    bins = []
    ece = 0.0
    for k in range(n_bins):
        mask = idx == k
        count = int(mask.sum())
        if count:
            conf = float(scores[mask].mean())
            freq = float(labels[mask].mean())
            ece += (count / n) * abs(conf - freq)
        else:
            conf = freq = float("nan")
        bins.append(
            ReliabilityBin(
                bin_low=float(edges[k]),
                bin_high=float(edges[k + 1]),
                mean_confidence=conf,
                empirical_frequency=freq,
                count=count,
            )
        )
    return ReliabilityTable(bins=bins, ece=float(ece), n=n)
