"""REST API over the review service, consumed by the review workstation UI.

Endpoints:
    GET  /rounds/{r}/status
    POST /rounds/{r}/enqueue        {qa_ids, policy?}
    POST /tickets/claim             {reviewer_id}
    POST /tickets/{id}/verdict      {reviewer_id, decision, annotations?}
    GET  /qa/{id}                   full pair + source record + media URIs
    GET  /export?rounds=3           approved items as JSONL

Errors are JSON {code, message, field_path?} with conventional status codes.
"""
from __future__ import annotations

import json
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from .qagen import QaPair, qa_to_dict
from .records import DudpRecord, record_to_dict
from .review import ReviewError, ReviewService, RoundPolicy

_STATUS_BY_CODE = {
    "invalid_round": 400,
    "invalid_decision": 400,
    "invalid_reviewer": 400,
    "policy_conflict": 409,
    "prerequisite_round_incomplete": 409,
    "invalid_transition": 409,
    "not_assignee": 409,
    "queue_empty": 404,
    "unknown_ticket": 404,
    "unknown_qa": 404,
}


class EnqueueBody(BaseModel):
    qa_ids: list[str]
    policy: dict[str, Any] | None = None


class ClaimBody(BaseModel):
    reviewer_id: str


class VerdictBody(BaseModel):
    reviewer_id: str
    decision: str
    annotations: list[dict[str, str]] = Field(default_factory=list)


def create_app(service: ReviewService,
               qa_index: dict[str, QaPair] | None = None,
               record_index: dict[str, DudpRecord] | None = None) -> FastAPI:
    qa_index = qa_index or {}
    record_index = record_index or {}
    app = FastAPI(title="review service")

    @app.exception_handler(ReviewError)
    async def _review_error(_: Request, exc: ReviewError) -> JSONResponse:
        body: dict[str, Any] = {"code": exc.code, "message": exc.message or exc.code}
        if exc.field_path:
            body["field_path"] = exc.field_path
        return JSONResponse(status_code=_STATUS_BY_CODE.get(exc.code, 400), content=body)

    @app.get("/rounds/{round_no}/status")
    def round_status(round_no: int) -> dict[str, Any]:
        return service.round_status(round_no)

    @app.post("/rounds/{round_no}/enqueue")
    def enqueue(round_no: int, body: EnqueueBody) -> dict[str, Any]:
        policy = RoundPolicy(**body.policy) if body.policy else None
        tickets = service.enqueue_round(body.qa_ids, round_no, policy)
        return {"tickets": [t.to_dict() for t in tickets]}

    @app.post("/tickets/claim")
    def claim(body: ClaimBody) -> dict[str, Any]:
        ticket = service.claim_next(body.reviewer_id)
        return ticket.to_dict()

    @app.post("/tickets/{ticket_id}/verdict")
    def verdict(ticket_id: str, body: VerdictBody) -> dict[str, Any]:
        ticket = service.submit_verdict(ticket_id, body.reviewer_id,
                                        body.decision, body.annotations)
        return ticket.to_dict()

    @app.get("/qa/{qa_id}")
    def qa_detail(qa_id: str) -> dict[str, Any]:
        if qa_id not in qa_index:
            raise ReviewError("unknown_qa", qa_id)
        qa = qa_index[qa_id]
        record = record_index.get(qa.record_id)
        return {
            "qa": qa_to_dict(qa),
            "record": record_to_dict(record) if record else None,
            "media_uris": [m.uri for m in qa.media],
        }

    @app.get("/export")
    def export(rounds: int = 3) -> PlainTextResponse:
        approved = service.export_approved(list(qa_index.values()), rounds_required=rounds)
        lines = "".join(json.dumps(qa_to_dict(qa), sort_keys=True, ensure_ascii=False,
                                   separators=(",", ":")) + "\n" for qa in approved)
        return PlainTextResponse(content=lines, media_type="application/x-ndjson")

    return app
