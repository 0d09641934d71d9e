"""HTTP facade over the labeling engine.

Reads may run concurrently; every mutation funnels through the engine's
single lock, so the AL loop never observes a half-submitted batch.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import Response
from pydantic import BaseModel

from pairval.service.session import (
    BadLabelError,
    DuplicateLabelError,
    LabelingEngine,
    UnknownPairError,
)


class LabelRequest(BaseModel):
    pair_id: str
    label: str


def create_app(engine: LabelingEngine, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="pairval labeling service")
    app.state.engine = engine

    @app.get("/api/session")
    def session_status() -> dict:
        return engine.status()

    @app.get("/api/session/next")
    def session_next() -> dict:
        nxt = engine.next_pair()
        if nxt is None:
            status = engine.status()["status"]
            raise HTTPException(404, f"no pending pair (session status: {status})")
        pid = nxt["pair_id"]
        return {
            "pair_id": pid,
            "original_png_url": f"/api/pairs/{pid}/original",
            "transformed_png_url": f"/api/pairs/{pid}/transformed",
            "metric_vector": engine.metric_vector(pid),
            "model_confidence": nxt["model_confidence"],
        }

    @app.post("/api/session/label")
    def session_label(req: LabelRequest) -> dict:
        try:
            engine.submit(req.pair_id, req.label)
        except BadLabelError as exc:
            raise HTTPException(400, str(exc)) from None
        except (UnknownPairError, DuplicateLabelError) as exc:
            raise HTTPException(409, str(exc)) from None
        return {"pair_id": req.pair_id, "status": engine.status()["status"]}

    @app.get("/api/pairs/{pair_id}/{which}")
    def pair_image(pair_id: str, which: str) -> Response:
        if which not in ("original", "transformed"):
            raise HTTPException(404, "image kind must be 'original' or 'transformed'")
        try:
            data = engine.image_bytes(pair_id, which)
        except KeyError:
            raise HTTPException(404, f"unknown pair {pair_id!r}") from None
        return Response(content=data, media_type="image/png")

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
