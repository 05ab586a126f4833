"""JSON-over-HTTP API for the assessment platform.

All handlers delegate to PlatformService; graphs and overlays are immutable
shared state, so concurrent requests need no coordination beyond the
per-session answer locks inside the service.
"""

from __future__ import annotations

from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .platform import (
    InvalidAnswerError,
    PlatformService,
    UnknownKbError,
    UnknownSessionError,
)


def create_app(service: PlatformService) -> FastAPI:
    app = FastAPI(title="intaudit", version="0.1.0")
    # the questionnaire UI is served from a different origin
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(UnknownSessionError)
    async def _unknown_session(request, exc):  # noqa: ANN001
        return JSONResponse(
            status_code=404, content={"detail": f"unknown session {exc.args[0]!r}"}
        )

    @app.exception_handler(UnknownKbError)
    async def _unknown_kb(request, exc):  # noqa: ANN001
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(InvalidAnswerError)
    async def _invalid_answer(request, exc):  # noqa: ANN001
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/api/kbs")
    def list_kbs() -> list[dict]:
        return service.kb_listing()

    @app.get("/api/kbs/{kb_id}/schema")
    def kb_schema(kb_id: str) -> dict:
        try:
            return service.kb_schema(kb_id)
        except UnknownKbError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/api/sessions", status_code=201)
    def create_session(body: dict = Body(...)) -> dict:
        kb_ids = body.get("kb_ids")
        if not isinstance(kb_ids, list) or not all(isinstance(x, str) for x in kb_ids):
            raise HTTPException(status_code=422, detail="body must be {\"kb_ids\": [...]}")
        return service.create_session(kb_ids)

    @app.patch("/api/sessions/{session_id}/answers")
    def submit_answers(session_id: str, body: dict = Body(...)) -> dict:
        for kb_id, answers in body.items():
            if not isinstance(answers, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in answers.items()
            ):
                raise HTTPException(
                    status_code=422,
                    detail=f"answers for {kb_id!r} must map attribute names to levels",
                )
        return service.submit_answers(session_id, body)

    @app.get("/api/sessions/{session_id}/assessment")
    def assessment(session_id: str) -> dict:
        return service.assessment(session_id)

    @app.get("/api/sessions/{session_id}/questions")
    def questions(session_id: str, k: int = Query(default=5, ge=1)) -> list[dict]:
        return service.questions(session_id, k)

    @app.get("/api/sessions/{session_id}/explain")
    def explain(session_id: str, kb: str = Query(...), attr: str = Query(...)) -> dict:
        return service.explain(session_id, kb, attr)

    @app.get("/api/sessions/{session_id}/export")
    def export_session(session_id: str) -> dict:
        return service.export_session(session_id)

    @app.get("/api/sessions/{session_id}/prefill")
    def prefill(session_id: str) -> dict:
        # extension hook: a document-extraction integration would fill this
        return service.prefill_suggestions(session_id)

    return app
