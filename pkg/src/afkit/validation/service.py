"""HTTP facade over the validation store.

Claim and submission semantics live in the store; this layer only maps them
onto status codes: 204 when the queue is drained, 409 on claim conflicts,
422 with field-keyed messages on invalid responses.
"""

from __future__ import annotations

from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse

from .store import StoreConflict, ValidationError, ValidationStore


def create_app(store: ValidationStore) -> FastAPI:
    app = FastAPI(title="annotation service", docs_url=None, redoc_url=None)

    @app.get("/api/tasks/next")
    def next_task(annotator: str = Query(..., min_length=1)):
        task = store.claim_next(annotator)
        if task is None:
            return Response(status_code=204)
        return JSONResponse(task.client_view())

    @app.post("/api/tasks/{task_id}/response")
    async def submit(task_id: str, request: Request):
        try:
            payload = await request.json()
        except Exception:
            return JSONResponse({"errors": {"body": "request body must be JSON"}},
                                status_code=422)
        if not isinstance(payload, dict):
            return JSONResponse({"errors": {"body": "request body must be an object"}},
                                status_code=422)
        try:
            store.submit_response(task_id, payload)
        except KeyError:
            return JSONResponse({"detail": f"unknown task {task_id}"}, status_code=404)
        except StoreConflict as exc:
            return JSONResponse({"detail": str(exc)}, status_code=409)
        except ValidationError as exc:
            return JSONResponse({"errors": exc.errors}, status_code=422)
        return {"status": "ok", "task_id": task_id}

    @app.get("/api/progress")
    def progress():
        return store.progress()

    @app.get("/api/metrics")
    def metrics():
        return store.metrics()

    return app


def serve(app: FastAPI, host: str = "127.0.0.1", port: int = 8700) -> None:
    """Run the service until signaled."""
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")
