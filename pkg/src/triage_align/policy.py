"""Trust-signal assembly and the three escalation policies.

The aligned policy escalates when the calibrated probability clears the
cost-derived threshold t* = c_fp / (c_fp + c_fn), with a safety override
that escalates any alert whose calibrated probability falls in the High
uncertainty band. The baseline and misaligned policies consume raw scores
against fixed cutoffs. All comparisons use >= so boundaries escalate.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .alerts import CostModel, Decision


class UncertaintyBand(str, Enum):
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"


class PolicyCondition(str, Enum):
    BASELINE = "C0"  # predicted label only, raw p vs 0.5
    MISALIGNED = "C1"  # raw confidence shown, conservative raw p vs 0.7
    ALIGNED = "C2"  # calibrated confidence vs t*, High-band override

    @property
    def label(self) -> str:
        return {
            PolicyCondition.BASELINE: "C0 Baseline",
            PolicyCondition.MISALIGNED: "C1 Misaligned",
            PolicyCondition.ALIGNED: "C2 Aligned",
        }[self]


CONDITIONS = (PolicyCondition.BASELINE, PolicyCondition.MISALIGNED, PolicyCondition.ALIGNED)

BASELINE_CUTOFF = 0.5
MISALIGNED_CUTOFF = 0.7


@dataclass(frozen=True)
class BandEdges:
    """Uncertainty band geometry around the neutral probability 0.5.

    High is the closed interval [high_low, high_high]; Medium is
    [medium_low, high_low) on the left and (high_high, medium_high] on the
    right; everything else is Low.
    """

    medium_low: float = 0.35
    high_low: float = 0.45
    high_high: float = 0.55
    medium_high: float = 0.65

    def __post_init__(self):
        if not (0.0 <= self.medium_low <= self.high_low <= self.high_high
                <= self.medium_high <= 1.0):
            raise ValueError("band edges must be ordered within [0, 1]")


DEFAULT_BANDS = BandEdges()


@dataclass(frozen=True)
class Threshold:
    t_star: float
    derived_from: CostModel


@dataclass(frozen=True)
class ScoredAlert:
    alert_id: str
    p: float
    p_cal: float
    band: UncertaintyBand

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.p_cal <= 1.0):
            raise ValueError("scores must lie in [0, 1]")


def derive_threshold(cost: CostModel) -> Threshold:
    return Threshold(t_star=cost.c_fp / (cost.c_fp + cost.c_fn), derived_from=cost)


def band_of(p_cal: float, edges: BandEdges = DEFAULT_BANDS) -> UncertaintyBand:
    if not 0.0 <= p_cal <= 1.0:
        raise ValueError(f"calibrated probability {p_cal} outside [0, 1]")
    if edges.high_low <= p_cal <= edges.high_high:
        return UncertaintyBand.HIGH
    if edges.medium_low <= p_cal < edges.high_low:
        return UncertaintyBand.MEDIUM
    if edges.high_high < p_cal <= edges.medium_high:
        return UncertaintyBand.MEDIUM
    return UncertaintyBand.LOW


def score_alert(
    alert_id: str, p: float, p_cal: float, edges: BandEdges = DEFAULT_BANDS
) -> ScoredAlert:
    return ScoredAlert(alert_id=alert_id, p=p, p_cal=p_cal, band=band_of(p_cal, edges))


def decide(
    condition: PolicyCondition,
    sa: ScoredAlert,
    t: Threshold,
    baseline_cutoff: float = BASELINE_CUTOFF,
    misaligned_cutoff: float = MISALIGNED_CUTOFF,
) -> Decision:
    """Escalate/Close for one alert under one interface condition. Pure."""
    if condition is PolicyCondition.BASELINE:
        escalate = sa.p >= baseline_cutoff
    elif condition is PolicyCondition.MISALIGNED:
        escalate = sa.p >= misaligned_cutoff
    elif condition is PolicyCondition.ALIGNED:
        escalate = sa.p_cal >= t.t_star or sa.band is UncertaintyBand.HIGH
    else:
        raise ValueError(f"unknown condition {condition!r}")
    return Decision.ESCALATE if escalate else Decision.CLOSE
