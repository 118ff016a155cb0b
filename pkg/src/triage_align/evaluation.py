"""Confusion accounting, cost-weighted loss, sweeps, and paired statistics.

Cost-weighted loss is c_fn*FN + c_fp*FP: a missed attack (malicious alert
closed) and a false alarm (benign alert escalated) are priced separately.
Sweeps trace that loss across escalation thresholds and across cost
ratios. The Wilcoxon signed-rank test backs the paired within-subject
study analysis; its p-values are exact (full sign-enumeration
distribution) up to 25 nonzero differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .alerts import AlertStream, CostModel, Decision
from .policy import (
    BASELINE_CUTOFF,
    CONDITIONS,
    DEFAULT_BANDS,
    MISALIGNED_CUTOFF,
    BandEdges,
    PolicyCondition,
    derive_threshold,
    decide,
    score_alert,
)


@dataclass(frozen=True)
class TriageOutcome:
    model_name: str
    condition: PolicyCondition | None
    fn_count: int
    fp_count: int
    tn_count: int
    tp_count: int
    cost: float

    @property
    def n(self) -> int:
        return self.fn_count + self.fp_count + self.tn_count + self.tp_count


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    cost: float


@dataclass(frozen=True)
class ThresholdSweep:
    points: list[SweepPoint]
    argmin_threshold: float
    argmin_cost: float
    t_star: float


@dataclass(frozen=True)
class CostRatioPoint:
    ratio: float
    condition: PolicyCondition
    cost: float
    t_star: float
    fn_count: int
    fp_count: int


@dataclass(frozen=True)
class WilcoxonResult:
    n_nonzero: int
    w_statistic: float
    p_value: float
    method: str  # "exact" | "normal_approx"


EXACT_WILCOXON_LIMIT = 25


def score_decisions(
    decisions,
    cost: CostModel,
    model_name: str = "",
    condition: PolicyCondition | None = None,
) -> TriageOutcome:
    """Tally a list of (Decision, label) pairs into a TriageOutcome."""
    if len(decisions) == 0:
        raise ValueError("cannot score an empty decision list")
    fn = fp = tn = tp = 0
    for decision, label in decisions:
        if decision is Decision.ESCALATE:
            if label == 1:
                tp += 1
            else:
                fp += 1
        else:
            if label == 1:
                fn += 1
            else:
                tn += 1
    return TriageOutcome(
        model_name=model_name,
        condition=condition,
        fn_count=fn,
        fp_count=fp,
        tn_count=tn,
        tp_count=tp,
        cost=cost.c_fn * fn + cost.c_fp * fp,
    )


def _aligned_scores(stream: AlertStream, pairs, what: str) -> np.ndarray:
    if len(pairs) == 0:
        raise ValueError(f"empty {what} score list")
    by_id = {}
    for alert_id, score in pairs:
        if alert_id in by_id:
            raise ValueError(f"duplicate id {alert_id!r} in {what} scores")
        by_id[alert_id] = float(score)
    missing = [i for i in stream.ids if i not in by_id]
    extra = set(by_id) - set(stream.ids)
    if missing or extra:
        raise ValueError(
            f"{what} scores do not align with the stream "
            f"({len(missing)} missing, {len(extra)} extra ids)"
        )
    return np.asarray([by_id[i] for i in stream.ids], dtype=np.float64)


def simulate(
    stream: AlertStream,
    raw_scores,
    cal_scores,
    cost: CostModel,
    model_name: str = "",
    edges: BandEdges = DEFAULT_BANDS,
    baseline_cutoff: float = BASELINE_CUTOFF,
    misaligned_cutoff: float = MISALIGNED_CUTOFF,
) -> list[TriageOutcome]:
    """Run every alert through all three policies: one outcome per condition.

    Scores arrive as (id, score) pairs and are aligned to the stream by id;
    any mismatch is an error rather than a silent reindex.
    """
    raw = _aligned_scores(stream, raw_scores, "raw")
    cal = _aligned_scores(stream, cal_scores, "calibrated")
    t = derive_threshold(cost)
    per_condition = {c: [] for c in CONDITIONS}
    for i, alert_id in enumerate(stream.ids):
        sa = score_alert(alert_id, raw[i], cal[i], edges)
        label = int(stream.y[i])
        for c in CONDITIONS:
            d = decide(c, sa, t, baseline_cutoff, misaligned_cutoff)
            per_condition[c].append((d, label))
    return [
        score_decisions(per_condition[c], cost, model_name=model_name, condition=c)
        for c in CONDITIONS
    ]


@dataclass(frozen=True)
class SweepGrid:
    min: float = 0.01
    max: float = 0.99
    step: float = 0.01

    def thresholds(self) -> np.ndarray:
        if not (0.0 < self.min <= self.max < 1.0) or self.step <= 0:
            raise ValueError("sweep grid must satisfy 0 < min <= max < 1, step > 0")
        n = int(math.floor((self.max - self.min) / self.step + 1e-9)) + 1
        ts = self.min + self.step * np.arange(n)
        return np.round(ts, 12)


def sweep_threshold(
    cal_scores, labels, cost: CostModel, grid: SweepGrid | None = None
) -> ThresholdSweep:
    """Cost of "escalate iff p_cal >= t" for every grid threshold t.

    Ties for the minimum resolve to the lowest threshold.
    """
    grid = grid or SweepGrid()
    ts = grid.thresholds()
    if ts.size == 0:
        raise ValueError("empty sweep grid")
    scores = np.asarray(list(cal_scores), dtype=np.float64)
    y = np.asarray(list(labels))
    if scores.shape != y.shape or scores.size == 0:
        raise ValueError("scores and labels must be equal-length and non-empty")

    pos_sorted = np.sort(scores[y == 1])
    neg_sorted = np.sort(scores[y == 0])
    fn = np.searchsorted(pos_sorted, ts, side="left")  # positives below t
    fp = len(neg_sorted) - np.searchsorted(neg_sorted, ts, side="left")
    costs = cost.c_fn * fn + cost.c_fp * fp

    best = int(np.argmin(costs))
    return ThresholdSweep(
        points=[SweepPoint(float(t), float(c)) for t, c in zip(ts, costs)],
        argmin_threshold=float(ts[best]),
        argmin_cost=float(costs[best]),
        t_star=derive_threshold(cost).t_star,
    )


def sweep_cost_ratio(
    raw_scores,
    cal_scores,
    labels,
    ratios=(5.0, 10.0, 15.0, 20.0),
    edges: BandEdges = DEFAULT_BANDS,
    baseline_cutoff: float = BASELINE_CUTOFF,
    misaligned_cutoff: float = MISALIGNED_CUTOFF,
) -> list[CostRatioPoint]:
    """Re-derive t* and re-simulate all conditions at each c_fn:c_fp ratio."""
    raw = np.asarray(list(raw_scores), dtype=np.float64)
    cal = np.asarray(list(cal_scores), dtype=np.float64)
    y = np.asarray(list(labels))
    if not (raw.shape == cal.shape == y.shape) or raw.size == 0:
        raise ValueError("scores and labels must be equal-length and non-empty")

    high_band = (cal >= edges.high_low) & (cal <= edges.high_high)
    pos = y == 1
    out = []
    for r in ratios:
        if r < 1:
            raise ValueError(f"cost ratio {r} must be >= 1")
        cost = CostModel(c_fn=float(r), c_fp=1.0)
        t_star = derive_threshold(cost).t_star
        escalate = {
            PolicyCondition.BASELINE: raw >= baseline_cutoff,
            PolicyCondition.MISALIGNED: raw >= misaligned_cutoff,
            PolicyCondition.ALIGNED: (cal >= t_star) | high_band,
        }
        for c in CONDITIONS:
            esc = escalate[c]
            fn = int((pos & ~esc).sum())
            fp = int((~pos & esc).sum())
            out.append(
                CostRatioPoint(
                    ratio=float(r),
                    condition=c,
                    cost=cost.c_fn * fn + cost.c_fp * fp,
                    t_star=t_star,
                    fn_count=fn,
                    fp_count=fp,
                )
            )
    return out


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_two_sided_p(doubled_ranks: np.ndarray, w_doubled: int) -> float:
    """P(min(W+, W-) <= w) over all 2^n equally likely sign assignments.

    Computed from the exact distribution of 2*W+ built by convolution over
    the doubled (hence integer) ranks; identical to enumerating every sign
    vector, but feasible for the full exact range.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    v = np.arange(total + 1)
    hit = np.minimum(v, total - v) <= w_doubled
    return float(counts[hit].sum() / counts.sum())


def wilcoxon_signed_rank(paired_diffs) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired differences.

    Zero differences are dropped; ties in |diff| get average ranks. With
    n_nonzero <= 25 the p-value is exact over all sign assignments,
    otherwise a tie-corrected normal approximation with continuity
    correction is used. All-zero input yields p = 1.0 by convention.
    """
    diffs = np.asarray(list(paired_diffs), dtype=np.float64)
    if diffs.size == 0:
        raise ValueError("need at least one paired difference")
    nz = diffs[diffs != 0.0]
    n = nz.size
    if n == 0:
        return WilcoxonResult(n_nonzero=0, w_statistic=0.0, p_value=1.0, method="exact")

    ranks = _average_ranks(np.abs(nz))
    w_plus = float(ranks[nz > 0].sum())
    w_minus = float(ranks[nz < 0].sum())
    w = min(w_plus, w_minus)

    if n <= EXACT_WILCOXON_LIMIT:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        p = _exact_two_sided_p(doubled, int(round(2.0 * w)))
        return WilcoxonResult(n_nonzero=n, w_statistic=w, p_value=p, method="exact")

    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(np.abs(nz), return_counts=True)
    var -= float(((tie_counts**3 - tie_counts) / 48.0).sum())
    if var <= 0:
        return WilcoxonResult(n_nonzero=n, w_statistic=w, p_value=1.0, method="normal_approx")
    z = (w - mean + 0.5) / math.sqrt(var)
    p = min(1.0, math.erfc(-z / math.sqrt(2.0)))  # 2 * Phi(z)
    return WilcoxonResult(n_nonzero=n, w_statistic=w, p_value=p, method="normal_approx")
