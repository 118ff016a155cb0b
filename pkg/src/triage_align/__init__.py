"""Decision-aware trust-signal alignment for SOC alert triage."""

from .alerts import (
    Alert,
    AlertStream,
    CostModel,
    Decision,
    IngestionError,
    ingest_csv,
    ingest_scores,
    stratified_split,
)
from .calibration import (
    IsotonicCalibrator,
    PlattCalibrator,
    ReliabilityTable,
    calibrate,
    fit_isotonic,
    fit_platt,
    reliability,
)
from .evaluation import (
    SweepGrid,
    TriageOutcome,
    WilcoxonResult,
    score_decisions,
    simulate,
    sweep_cost_ratio,
    sweep_threshold,
    wilcoxon_signed_rank,
)
from .policy import (
    BandEdges,
    PolicyCondition,
    ScoredAlert,
    Threshold,
    UncertaintyBand,
    band_of,
    decide,
    derive_threshold,
)

__version__ = "0.1.0"
