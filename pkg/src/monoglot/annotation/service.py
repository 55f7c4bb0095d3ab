"""HTTP JSON API over a labeling campaign.

Endpoints (all state lives in the campaign's append-only log):

    GET  /items/next?annotator=ID   200 item | 204 queue empty
    POST /labels                    201 stored | 409 duplicate | 422 invalid
    GET  /progress                  per-annotator counts
    GET  /agreement                 agreement stats + per-item conflict rows
    GET  /export?task=T&labels=K    fine-tuning JSONL (K: binary | multilabel)
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .campaign import (
    AnnotationError,
    AnnotationRecord,
    Campaign,
    ConflictError,
    ValidationError,
    agreement_stats,
    export_dataset,
    resolve_agreement,
    rows_to_jsonl,
)


class LabelSubmission(BaseModel):
    item_id: str
    annotator_id: str
    stage1: str
    stage2: list[str] | None = None
    timestamp: str = ""


def create_app(campaign: Campaign) -> FastAPI:
    app = FastAPI(title="annotation service")
    # the browser client may be served from another origin (static file server)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )

    @app.get("/items/next")
    def next_item(annotator: str):
        try:
            item = campaign.next_item(annotator)
        except AnnotationError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if item is None:
            return Response(status_code=204)
        return item.to_dict()

    @app.post("/labels", status_code=201)
    def submit_label(body: LabelSubmission):
        record = AnnotationRecord(
            item_id=body.item_id,
            annotator_id=body.annotator_id,
            stage1=body.stage1,
            stage2=frozenset(body.stage2) if body.stage2 is not None else None,
            timestamp=body.timestamp,
        )
        try:
            stored = campaign.submit_label(record)
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except AnnotationError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return stored.to_dict()

    @app.get("/progress")
    def progress():
        return campaign.progress()

    @app.get("/agreement")
    def agreement():
        pairs = campaign.complete_pairs()
        resolved, summary = resolve_agreement(
            rec for pair in pairs.values() for rec in pair
        )
        status_of = {r.item_id: r.status for r in resolved}
        rows = [
            {
                "item_id": item_id,
                "labels": {r1.annotator_id: r1.stage1, r2.annotator_id: r2.stage1},
                "status": status_of[item_id],
            }
            for item_id, (r1, r2) in pairs.items()
        ]
        if pairs:
            stats = agreement_stats(pairs)
        else:
            stats = {
                "complete_items": 0,
                "raw_agreement_rate": None,
                "cohen_kappa": None,
                "kappa_undefined": True,
            }
        return {**stats, "summary": summary, "items": rows}

    @app.get("/export")
    def export(task: str, labels: str = "binary"):
        pairs = campaign.complete_pairs()
        resolved, _ = resolve_agreement(
            rec for pair in pairs.values() for rec in pair
        )
        try:
            files = export_dataset(resolved, campaign.items, task)
        except AnnotationError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if labels not in files:
            raise HTTPException(
                status_code=400,
                detail=f"task {task!r} has no {labels!r} export (available: {sorted(files)})",
            )
        return Response(
            content=rows_to_jsonl(files[labels]),
            media_type="application/x-ndjson",
        )

    return app
