"""Request and response bodies for the HTTP API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class QueryRequest(BaseModel):
    image: str = Field(description="base64-encoded PNG bytes")
    k: int = Field(default=5, ge=1)
    include_saliency: bool = False


class NeighborOut(BaseModel):
    patch_id: str
    distance: float
    label: int | None
    thumbnail_url: str
    saliency_url: str | None = None


class QueryResponse(BaseModel):
    neighbors: list[NeighborOut]
    suggested_label: int | None
    margin_score: float | None
    query_embedding: list[float]


class StatsResponse(BaseModel):
    store_size: int
    dimension: int
    checkpoint_hash: str
