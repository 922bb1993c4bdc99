"""FastAPI application over a loaded checkpoint and store.

All state is read-only after startup; the server can be rebuilt from the
checkpoint and store files alone.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles

from ..errors import DataError
from ..images import encode_png
from .schemas import QueryRequest, QueryResponse, StatsResponse
from .state import AppState, handle_query


def create_app(state: AppState, static_dir=None) -> FastAPI:
    app = FastAPI(title="twinsearch")

    @app.post("/api/query", response_model=QueryResponse, response_model_exclude_none=False)
    def api_query(req: QueryRequest) -> QueryResponse:
        try:
            return handle_query(req, state)
        except DataError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.get("/api/patches/{patch_id}")
    def api_patch(patch_id: str) -> Response:
        if patch_id not in state.store:
            raise HTTPException(status_code=404, detail=f"unknown patch {patch_id!r}")
        try:
            pixels = state.patch_pixels(patch_id)
        except DataError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return Response(content=encode_png(pixels), media_type="image/png")

    @app.get("/api/saliency/{query_key}/{patch_id}")
    def api_saliency(query_key: str, patch_id: str) -> Response:
        png = state.cached_saliency(query_key, patch_id)
        if png is None:
            raise HTTPException(
                status_code=404,
                detail="no cached overlay; POST /api/query with include_saliency first",
            )
        return Response(content=png, media_type="image/png")

    @app.get("/api/stats", response_model=StatsResponse)
    def api_stats() -> StatsResponse:
        return StatsResponse(
            store_size=len(state.store),
            dimension=state.store.dimension,
            checkpoint_hash=state.checkpoint_hash,
        )

    @app.get("/api/report")
    def api_report() -> dict:
        if state.report is None:
            raise HTTPException(status_code=404, detail="no evaluation report loaded")
        return state.report

    if static_dir is not None:
        static_dir = Path(static_dir)
        if static_dir.is_dir():
            app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
