"""Human-in-the-loop triage study engine.

Each participant triages the same fixed alert set three times, once per
interface condition, with condition order rotated Latin-square style
across participants and a fresh seeded shuffle of the alerts in every
block. Per-trial decisions append to a JSONL log; analysis is a pure
function of that log and a cost model, so replaying the log reproduces
the analysis bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .alerts import AlertStream, CostModel, Decision
from .evaluation import TriageOutcome, WilcoxonResult, score_decisions, wilcoxon_signed_rank
from .policy import (
    BASELINE_CUTOFF,
    CONDITIONS,
    DEFAULT_BANDS,
    MISALIGNED_CUTOFF,
    BandEdges,
    PolicyCondition,
    Threshold,
    decide,
    derive_threshold,
    score_alert,
)

GROUPS = ("proxy_analyst", "practitioner")

ROTATIONS = (
    (PolicyCondition.BASELINE, PolicyCondition.MISALIGNED, PolicyCondition.ALIGNED),
    (PolicyCondition.MISALIGNED, PolicyCondition.ALIGNED, PolicyCondition.BASELINE),
    (PolicyCondition.ALIGNED, PolicyCondition.BASELINE, PolicyCondition.MISALIGNED),
)

N_BLOCKS = 3

ORIENTATION_TEXT = (
    "You will review a stream of security alerts. For each alert decide whether "
    "to ESCALATE it for investigation or CLOSE it as benign. Closing a real "
    "attack is far more costly than escalating a false alarm. Depending on the "
    "interface block you may also see a model confidence value, an uncertainty "
    "band, or a recommendation; use them as you see fit. Optionally rate your "
    "confidence in each decision from 1 (guessing) to 5 (certain). You will "
    "never be told whether a decision was correct."
)


class StudyError(Exception):
    """Base class for study-protocol violations."""


class DuplicateParticipantError(StudyError):
    pass


class UnknownSessionError(StudyError):
    pass


class CompletedSessionError(StudyError):
    pass


class WrongTrialError(StudyError):
    def __init__(self, message, expected_alert_id, block_index, trial_index):
        super().__init__(message)
        self.expected_alert_id = expected_alert_id
        self.block_index = block_index
        self.trial_index = trial_index


@dataclass(frozen=True)
class StudyAlert:
    id: str
    features: tuple[float, ...]
    label: int
    p_raw: float
    p_cal: float


@dataclass
class StudyBundle:
    """The fixed study alert set plus the signals each condition may show."""

    model_name: str
    feature_names: list[str]
    alerts: list[StudyAlert]
    cost: CostModel
    edges: BandEdges = DEFAULT_BANDS
    baseline_cutoff: float = BASELINE_CUTOFF
    misaligned_cutoff: float = MISALIGNED_CUTOFF
    seed: int = 0

    @property
    def threshold(self) -> Threshold:
        return derive_threshold(self.cost)

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "model_name": self.model_name,
            "feature_names": self.feature_names,
            "cost": {"c_fn": self.cost.c_fn, "c_fp": self.cost.c_fp},
            "band_edges": [
                self.edges.medium_low,
                self.edges.high_low,
                self.edges.high_high,
                self.edges.medium_high,
            ],
            "baseline_cutoff": self.baseline_cutoff,
            "misaligned_cutoff": self.misaligned_cutoff,
            "seed": self.seed,
            "alerts": [
                {
                    "id": a.id,
                    "features": list(a.features),
                    "label": a.label,
                    "p_raw": a.p_raw,
                    "p_cal": a.p_cal,
                }
                for a in self.alerts
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StudyBundle":
        if doc.get("format_version") != 1:
            raise ValueError("unsupported study bundle format_version")
        edges = BandEdges(*doc["band_edges"])
        return cls(
            model_name=doc["model_name"],
            feature_names=list(doc["feature_names"]),
            alerts=[
                StudyAlert(
                    id=a["id"],
                    features=tuple(a["features"]),
                    label=int(a["label"]),
                    p_raw=float(a["p_raw"]),
                    p_cal=float(a["p_cal"]),
                )
                for a in doc["alerts"]
            ],
            cost=CostModel(**doc["cost"]),
            edges=edges,
            baseline_cutoff=float(doc["baseline_cutoff"]),
            misaligned_cutoff=float(doc["misaligned_cutoff"]),
            seed=int(doc["seed"]),
        )


def sample_study_alerts(
    stream: AlertStream,
    raw_by_id: dict[str, float],
    cal_by_id: dict[str, float],
    n: int,
    seed: int,
) -> list[StudyAlert]:
    """Fixed-size stratified sample preserving the stream's malicious rate."""
    if n < 2 or n > len(stream):
        raise ValueError(f"study sample size {n} out of range for stream of {len(stream)}")
    rate = float(stream.y.mean())
    n_mal = min(max(int(round(n * rate)), 1), n - 1)
    n_ben = n - n_mal
    rng = np.random.default_rng(seed)
    chosen = []
    for cls, want in ((1, n_mal), (0, n_ben)):
        idx = np.nonzero(stream.y == cls)[0]
        if len(idx) < want:
            raise ValueError(f"not enough class-{cls} alerts for the study sample")
        chosen.extend(rng.choice(idx, size=want, replace=False))
    chosen.sort()
    out = []
    for i in chosen:
        alert_id = stream.ids[i]
        out.append(
            StudyAlert(
                id=alert_id,
                features=tuple(float(v) for v in stream.X[i]),
                label=int(stream.y[i]),
                p_raw=raw_by_id[alert_id],
                p_cal=cal_by_id[alert_id],
            )
        )
    return out


@dataclass
class Session:
    participant_id: str
    group: str
    rotation_index: int
    order: tuple[PolicyCondition, ...]
    block_orders: list[list[int]]
    block_index: int = 0
    trial_index: int = 0
    completed: bool = False
    served: bool = False

    @property
    def state(self) -> str:
        if self.completed:
            return "Completed"
        if self.served or self.block_index or self.trial_index:
            return "InBlock"
        return "Created"

    @property
    def condition(self) -> PolicyCondition:
        return self.order[self.block_index]

    def current_alert_index(self) -> int:
        return self.block_orders[self.block_index][self.trial_index]


def _block_permutation(study_seed: int, participant_id: str, block: int, n: int) -> list[int]:
    material = f"{study_seed}:{participant_id}:{block}".encode()
    seed = int.from_bytes(hashlib.sha256(material).digest()[:8], "big")
    rng = np.random.default_rng(seed)
    return [int(v) for v in rng.permutation(n)]


@dataclass(frozen=True)
class TrialRecord:
    participant_id: str
    group: str
    condition: str
    alert_id: str
    label: int
    decision: str
    decision_time_ms: int
    confidence_rating: int | None
    server_ts: str

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "participant_id": self.participant_id,
                "group": self.group,
                "condition": self.condition,
                "alert_id": self.alert_id,
                "label": self.label,
                "decision": self.decision,
                "decision_time_ms": self.decision_time_ms,
                "confidence_rating": self.confidence_rating,
                "server_ts": self.server_ts,
            }
        )

    @classmethod
    def from_dict(cls, doc: dict) -> "TrialRecord":
        rating = doc.get("confidence_rating")
        return cls(
            participant_id=str(doc["participant_id"]),
            group=str(doc["group"]),
            condition=str(doc["condition"]),
            alert_id=str(doc["alert_id"]),
            label=int(doc["label"]),
            decision=str(doc["decision"]),
            decision_time_ms=int(doc["decision_time_ms"]),
            confidence_rating=None if rating is None else int(rating),
            server_ts=str(doc.get("server_ts", "")),
        )


class StudyEngine:
    """Serves sessions and trials, logs decisions, survives restarts.

    Mutation is serialized under one lock; every appended record is flushed
    to disk before the submission is acknowledged. Restart recovery rebuilds
    sessions from the session registry and replays the trial log.
    """

    def __init__(self, bundle: StudyBundle, log_dir=None):
        self.bundle = bundle
        self.sessions: dict[str, Session] = {}
        self.records: list[TrialRecord] = []
        self._creation_count = 0
        self._lock = threading.Lock()
        self._trial_log = None
        self._session_log = None
        if log_dir is not None:
            log_dir = Path(log_dir)
            log_dir.mkdir(parents=True, exist_ok=True)
            self._trial_log = log_dir / "trials.jsonl"
            self._session_log = log_dir / "sessions.jsonl"
            self._recover()

    @property
    def n_alerts(self) -> int:
        return len(self.bundle.alerts)

    # -- persistence ------------------------------------------------------

    def _append_line(self, path: Path, line: str) -> None:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _recover(self) -> None:
        if self._session_log is not None and self._session_log.exists():
            with open(self._session_log, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    doc = json.loads(line)
                    self._register_session(doc["participant_id"], doc["group"])
        if self._trial_log is not None and self._trial_log.exists():
            with open(self._trial_log, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    rec = TrialRecord.from_dict(json.loads(line))
                    session = self.sessions.get(rec.participant_id)
                    if session is None:
                        raise StudyError(
                            f"trial log references unknown participant {rec.participant_id!r}"
                        )
                    expected = self.bundle.alerts[session.current_alert_index()].id
                    if rec.alert_id != expected:
                        raise StudyError(
                            f"trial log out of order for {rec.participant_id!r}: "
                            f"expected alert {expected!r}, got {rec.alert_id!r}"
                        )
                    self.records.append(rec)
                    self._advance(session)

    # -- session lifecycle -------------------------------------------------

    def _register_session(self, participant_id: str, group: str) -> Session:
        rotation = self._creation_count % len(ROTATIONS)
        session = Session(
            participant_id=participant_id,
            group=group,
            rotation_index=rotation,
            order=ROTATIONS[rotation],
            block_orders=[
                _block_permutation(self.bundle.seed, participant_id, b, self.n_alerts)
                for b in range(N_BLOCKS)
            ],
        )
        self.sessions[participant_id] = session
        self._creation_count += 1
        return session

    def create_session(self, participant_id: str, group: str) -> Session:
        if group not in GROUPS:
            raise ValueError(f"group must be one of {GROUPS}, got {group!r}")
        if not participant_id or not participant_id.strip():
            raise ValueError("participant_id must be non-empty")
        with self._lock:
            if participant_id in self.sessions:
                raise DuplicateParticipantError(
                    f"participant {participant_id!r} already has a session"
                )
            session = self._register_session(participant_id, group)
            if self._session_log is not None:
                self._append_line(
                    self._session_log,
                    json.dumps({"participant_id": participant_id, "group": group}),
                )
            return session

    def _get(self, participant_id: str) -> Session:
        session = self.sessions.get(participant_id)
        if session is None:
            raise UnknownSessionError(f"no session for participant {participant_id!r}")
        return session

    # -- trials -------------------------------------------------------------

    def next_trial(self, participant_id: str) -> dict:
        """Current trial payload; repeated calls without a decision repeat it.

        The payload carries exactly the signals its condition allows and
        never the ground-truth label.
        """
        with self._lock:
            session = self._get(participant_id)
            if session.completed:
                raise CompletedSessionError(f"session {participant_id!r} is completed")
            session.served = True
            alert = self.bundle.alerts[session.current_alert_index()]
            condition = session.condition
            payload = {
                "alert_id": alert.id,
                "condition": condition.value,
                "block_index": session.block_index,
                "trial_index": session.trial_index,
                "n_trials": self.n_alerts,
                "n_blocks": N_BLOCKS,
                "features": [
                    {"name": n, "value": v}
                    for n, v in zip(self.bundle.feature_names, alert.features)
                ],
            }
            if condition is PolicyCondition.BASELINE:
                predicted_malicious = alert.p_raw >= self.bundle.baseline_cutoff
                payload["predicted_label"] = "malicious" if predicted_malicious else "benign"
            elif condition is PolicyCondition.MISALIGNED:
                payload["raw_confidence"] = alert.p_raw
            else:
                sa = score_alert(alert.id, alert.p_raw, alert.p_cal, self.bundle.edges)
                recommendation = decide(
                    condition,
                    sa,
                    self.bundle.threshold,
                    self.bundle.baseline_cutoff,
                    self.bundle.misaligned_cutoff,
                )
                payload["calibrated_confidence"] = alert.p_cal
                payload["uncertainty_band"] = sa.band.value
                payload["recommendation"] = recommendation.value
            return payload

    def _advance(self, session: Session) -> None:
        session.trial_index += 1
        if session.trial_index >= self.n_alerts:
            session.trial_index = 0
            session.block_index += 1
            if session.block_index >= N_BLOCKS:
                session.block_index = N_BLOCKS - 1
                session.trial_index = self.n_alerts  # parked past the end
                session.completed = True

    def submit_decision(
        self,
        participant_id: str,
        alert_id: str,
        decision: str,
        decision_time_ms: int,
        confidence_rating: int | None = None,
    ) -> dict:
        with self._lock:
            session = self._get(participant_id)
            if session.completed:
                raise CompletedSessionError(f"session {participant_id!r} is completed")
            current = self.bundle.alerts[session.current_alert_index()]
            if alert_id != current.id:
                raise WrongTrialError(
                    f"decision for alert {alert_id!r} does not match the current "
                    f"trial {current.id!r} (duplicate or out-of-order submission)",
                    expected_alert_id=current.id,
                    block_index=session.block_index,
                    trial_index=session.trial_index,
                )
            try:
                decision_enum = Decision(decision)
            except ValueError:
                raise ValueError(f"decision must be 'Escalate' or 'Close', got {decision!r}")
            if not isinstance(decision_time_ms, int) or decision_time_ms < 0:
                raise ValueError("decision_time_ms must be a non-negative integer")
            if confidence_rating is not None and confidence_rating not in (1, 2, 3, 4, 5):
                raise ValueError("confidence_rating must be an integer from 1 to 5")

            record = TrialRecord(
                participant_id=participant_id,
                group=session.group,
                condition=session.condition.value,
                alert_id=alert_id,
                label=current.label,
                decision=decision_enum.value,
                decision_time_ms=decision_time_ms,
                confidence_rating=confidence_rating,
                server_ts=datetime.now(timezone.utc).isoformat(),
            )
            if self._trial_log is not None:
                self._append_line(self._trial_log, record.to_json_line())
            self.records.append(record)
            self._advance(session)
            return {
                "accepted": True,
                "completed": session.completed,
                "block_index": session.block_index if not session.completed else N_BLOCKS - 1,
                "trial_index": session.trial_index if not session.completed else self.n_alerts,
            }

    def progress(self, participant_id: str) -> dict:
        with self._lock:
            session = self._get(participant_id)
            return {
                "participant_id": session.participant_id,
                "group": session.group,
                "state": session.state,
                "completed": session.completed,
                "block_index": session.block_index,
                "trial_index": session.trial_index,
                "n_trials": self.n_alerts,
                "n_blocks": N_BLOCKS,
                "condition": None if session.completed else session.condition.value,
                "condition_order": [c.value for c in session.order],
            }

    def iter_log_lines(self):
        with self._lock:
            snapshot = list(self.records)
        for record in snapshot:
            yield record.to_json_line()

    def analyze(self, cost: CostModel) -> "StudyAnalysis":
        with self._lock:
            snapshot = list(self.records)
        return analyze_study(snapshot, cost)


# -- analysis ----------------------------------------------------------------


@dataclass
class StudyAnalysis:
    cost_model: CostModel
    n_records: int
    n_completed: int
    excluded_participants: list[str]
    per_participant: list[dict]
    condition_totals: dict[str, TriageOutcome]
    decision_time_ms: dict[str, dict]
    confidence_calibration: list[dict]
    cost_test: WilcoxonResult
    fn_test: WilcoxonResult
    inference_note: str | None = None

    def to_dict(self) -> dict:
        def outcome_dict(o: TriageOutcome) -> dict:
            return {
                "fn": o.fn_count,
                "fp": o.fp_count,
                "tn": o.tn_count,
                "tp": o.tp_count,
                "cost": o.cost,
            }

        def test_dict(t: WilcoxonResult) -> dict:
            return {
                "n_nonzero": t.n_nonzero,
                "w_statistic": t.w_statistic,
                "p_value": t.p_value,
                "method": t.method,
            }

        return {
            "cost_model": {"c_fn": self.cost_model.c_fn, "c_fp": self.cost_model.c_fp},
            "n_records": self.n_records,
            "n_completed": self.n_completed,
            "excluded_participants": self.excluded_participants,
            "per_participant": [
                {
                    "participant_id": p["participant_id"],
                    "group": p["group"],
                    "outcomes": {c: outcome_dict(o) for c, o in p["outcomes"].items()},
                }
                for p in self.per_participant
            ],
            "condition_totals": {
                c: outcome_dict(o) for c, o in self.condition_totals.items()
            },
            "decision_time_ms": self.decision_time_ms,
            "confidence_calibration": self.confidence_calibration,
            "paired_tests": {
                "cost_c0_vs_c2": test_dict(self.cost_test),
                "fn_c0_vs_c2": test_dict(self.fn_test),
            },
            "inference_note": self.inference_note,
        }


def _is_complete(by_condition: dict[str, list[TrialRecord]]) -> bool:
    if set(by_condition) != {c.value for c in CONDITIONS}:
        return False
    id_sets = []
    for records in by_condition.values():
        ids = [r.alert_id for r in records]
        if len(set(ids)) != len(ids):
            return False
        id_sets.append(set(ids))
    return id_sets[0] == id_sets[1] == id_sets[2]


def analyze_study(records, cost: CostModel, min_n_inference: int = 6) -> StudyAnalysis:
    """Per-participant outcomes, timing, confidence calibration, paired tests.

    Only structurally complete sessions enter the analysis: all three
    conditions present, the same alert set in each, no duplicates. The
    primary contrast pairs each participant's baseline block against their
    aligned block.
    """
    records = list(records)
    if not records:
        raise ValueError("no trial records to analyze")

    by_participant: dict[str, dict[str, list[TrialRecord]]] = {}
    groups: dict[str, str] = {}
    for r in records:
        by_participant.setdefault(r.participant_id, {}).setdefault(r.condition, []).append(r)
        groups[r.participant_id] = r.group

    complete, excluded = [], []
    for pid in sorted(by_participant):
        if _is_complete(by_participant[pid]):
            complete.append(pid)
        else:
            excluded.append(pid)
    if not complete:
        raise ValueError("no completed sessions in the trial log")

    per_participant = []
    cost_diffs, fn_diffs = [], []
    for pid in complete:
        outcomes = {}
        for c in CONDITIONS:
            recs = by_participant[pid][c.value]
            decisions = [(Decision(r.decision), r.label) for r in recs]
            outcomes[c.value] = score_decisions(
                decisions, cost, model_name=pid, condition=c
            )
        per_participant.append(
            {"participant_id": pid, "group": groups[pid], "outcomes": outcomes}
        )
        c0 = outcomes[PolicyCondition.BASELINE.value]
        c2 = outcomes[PolicyCondition.ALIGNED.value]
        cost_diffs.append(c0.cost - c2.cost)
        fn_diffs.append(float(c0.fn_count - c2.fn_count))

    condition_totals = {}
    for c in CONDITIONS:
        fn = sum(p["outcomes"][c.value].fn_count for p in per_participant)
        fp = sum(p["outcomes"][c.value].fp_count for p in per_participant)
        tn = sum(p["outcomes"][c.value].tn_count for p in per_participant)
        tp = sum(p["outcomes"][c.value].tp_count for p in per_participant)
        condition_totals[c.value] = TriageOutcome(
            model_name="all",
            condition=c,
            fn_count=fn,
            fp_count=fp,
            tn_count=tn,
            tp_count=tp,
            cost=cost.c_fn * fn + cost.c_fp * fp,
        )

    complete_set = set(complete)
    timing: dict[str, dict] = {}
    for c in CONDITIONS:
        times = [
            float(r.decision_time_ms)
            for r in records
            if r.condition == c.value and r.participant_id in complete_set
        ]
        timing[c.value] = {
            "mean": float(np.mean(times)) if times else None,
            "median": float(np.median(times)) if times else None,
            "count": len(times),
        }

    confidence_rows = []
    for level in (1, 2, 3, 4, 5):
        rated = [
            r
            for r in records
            if r.confidence_rating == level and r.participant_id in complete_set
        ]
        correct = sum(
            1
            for r in rated
            if (r.decision == Decision.ESCALATE.value) == (r.label == 1)
        )
        confidence_rows.append(
            {
                "rating": level,
                "count": len(rated),
                "accuracy": (correct / len(rated)) if rated else None,
            }
        )

    note = None
    if len(complete) < min_n_inference:
        note = (
            f"only {len(complete)} completed participant(s); paired tests are "
            f"reported descriptively (smallest attainable two-sided exact p is "
            f"{2.0 / 2 ** len(complete):.3g})"
        )

    return StudyAnalysis(
        cost_model=cost,
        n_records=len(records),
        n_completed=len(complete),
        excluded_participants=excluded,
        per_participant=per_participant,
        condition_totals=condition_totals,
        decision_time_ms=timing,
        confidence_calibration=confidence_rows,
        cost_test=wilcoxon_signed_rank(cost_diffs),
        fn_test=wilcoxon_signed_rank(fn_diffs),
        inference_note=note,
    )


def load_trial_log(path) -> list[TrialRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(TrialRecord.from_dict(json.loads(line)))
    return records
