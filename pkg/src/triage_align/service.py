"""HTTP API over the study engine.

Endpoints:
    POST /sessions                       create a participant session
    GET  /sessions/{id}/trial            current trial payload
    POST /sessions/{id}/decision         submit Escalate/Close for the trial
    GET  /sessions/{id}/progress         block/trial counters
    GET  /export/logs                    JSONL stream of trial records
    GET  /analysis?c_fn=10&c_fp=1        study analysis document
    GET  /orientation                    static instructions text
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .alerts import CostModel
from .study import (
    GROUPS,
    N_BLOCKS,
    ORIENTATION_TEXT,
    CompletedSessionError,
    DuplicateParticipantError,
    StudyEngine,
    UnknownSessionError,
    WrongTrialError,
)


class SessionCreateRequest(BaseModel):
    participant_id: str = Field(min_length=1)
    group: Literal["proxy_analyst", "practitioner"]


class SessionDescriptor(BaseModel):
    participant_id: str
    group: str
    condition_order: list[str]
    n_blocks: int
    n_trials_per_block: int


class FeatureValue(BaseModel):
    name: str
    value: float


class TrialPayload(BaseModel):
    alert_id: str
    condition: str
    block_index: int
    trial_index: int
    n_trials: int
    n_blocks: int
    features: list[FeatureValue]
    predicted_label: Optional[str] = None
    raw_confidence: Optional[float] = None
    calibrated_confidence: Optional[float] = None
    uncertainty_band: Optional[str] = None
    recommendation: Optional[str] = None


class DecisionRequest(BaseModel):
    alert_id: str
    decision: Literal["Escalate", "Close"]
    decision_time_ms: int = Field(ge=0)
    confidence_rating: Optional[int] = Field(default=None, ge=1, le=5)


class DecisionAck(BaseModel):
    accepted: bool
    completed: bool
    block_index: int
    trial_index: int


class ProgressResponse(BaseModel):
    participant_id: str
    group: str
    state: str
    completed: bool
    block_index: int
    trial_index: int
    n_trials: int
    n_blocks: int
    condition: Optional[str]
    condition_order: list[str]


def create_app(engine: StudyEngine, ui_dir=None) -> FastAPI:
    app = FastAPI(title="triage-align study service")

    @app.post("/sessions", response_model=SessionDescriptor, status_code=201)
    def create_session(req: SessionCreateRequest) -> SessionDescriptor:
        try:
            session = engine.create_session(req.participant_id, req.group)
        except DuplicateParticipantError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return SessionDescriptor(
            participant_id=session.participant_id,
            group=session.group,
            condition_order=[c.value for c in session.order],
            n_blocks=N_BLOCKS,
            n_trials_per_block=engine.n_alerts,
        )

    @app.get(
        "/sessions/{participant_id}/trial",
        response_model=TrialPayload,
        response_model_exclude_none=True,
    )
    def get_trial(participant_id: str) -> TrialPayload:
        try:
            return TrialPayload(**engine.next_trial(participant_id))
        except UnknownSessionError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except CompletedSessionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.post("/sessions/{participant_id}/decision", response_model=DecisionAck)
    def post_decision(participant_id: str, req: DecisionRequest) -> DecisionAck:
        try:
            ack = engine.submit_decision(
                participant_id,
                req.alert_id,
                req.decision,
                req.decision_time_ms,
                req.confidence_rating,
            )
        except UnknownSessionError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except CompletedSessionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except WrongTrialError as exc:
            raise HTTPException(
                status_code=409,
                detail={
                    "message": str(exc),
                    "expected_alert_id": exc.expected_alert_id,
                    "block_index": exc.block_index,
                    "trial_index": exc.trial_index,
                },
            )
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return DecisionAck(**ack)

    @app.get("/sessions/{participant_id}/progress", response_model=ProgressResponse)
    def get_progress(participant_id: str) -> ProgressResponse:
        try:
            return ProgressResponse(**engine.progress(participant_id))
        except UnknownSessionError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.get("/export/logs")
    def export_logs() -> StreamingResponse:
        def stream():
            for line in engine.iter_log_lines():
                yield line + "\n"

        return StreamingResponse(stream(), media_type="application/x-ndjson")

    @app.get("/analysis")
    def get_analysis(c_fn: float = 10.0, c_fp: float = 1.0) -> dict:
        try:
            cost = CostModel(c_fn=c_fn, c_fp=c_fp)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        try:
            return engine.analyze(cost).to_dict()
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.get("/orientation")
    def get_orientation() -> dict:
        return {"text": ORIENTATION_TEXT, "groups": list(GROUPS)}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
