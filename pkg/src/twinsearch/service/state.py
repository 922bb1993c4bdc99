"""Shared server state and the query pipeline.

The same handle_query drives both the HTTP route and the CLI `query`
subcommand, so the two surfaces cannot drift apart in ranking, voting,
or margin arithmetic.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import threading
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from ..evaluation import majority_vote_label
from ..images import bilinear_resize, decode_image_bytes, encode_png, load_image
from ..network import Network, load_checkpoint
from ..saliency import grad_cam, overlay
from ..store import FeatureStore, RetrievalResult, query_top_k
from .schemas import NeighborOut, QueryRequest, QueryResponse


def query_key_for(image_bytes: bytes) -> str:
    """Stable cache key for one uploaded image's bytes."""
    return hashlib.sha256(image_bytes).hexdigest()[:16]


class AppState:
    """Read-only network + store plus a cache of rendered saliency PNGs."""

    def __init__(self, network: Network, store: FeatureStore,
                 checkpoint_hash: str = "", report: dict | None = None):
        if store.dimension != network.embedding_dim:
            raise ConfigError(
                f"store dimension {store.dimension} does not match network "
                f"embedding dimension {network.embedding_dim}"
            )
        self.network = network
        self.store = store
        self.checkpoint_hash = checkpoint_hash
        self.report = report
        self._saliency_cache: dict[tuple[str, str], bytes] = {}
        self._cache_lock = threading.Lock()

    @classmethod
    def from_files(cls, checkpoint_path, store_path, report_path=None) -> "AppState":
        checkpoint_path = Path(checkpoint_path)
        network = load_checkpoint(checkpoint_path)
        store = FeatureStore.load(store_path)
        digest = hashlib.sha256(checkpoint_path.read_bytes()).hexdigest()
        report = None
        if report_path is not None:
            report_path = Path(report_path)
            if not report_path.is_file():
                raise DataError(f"report file not found: {report_path}")
            report = json.loads(report_path.read_text())
        return cls(network, store, checkpoint_hash=digest, report=report)

    def patch_pixels(self, patch_id: str) -> np.ndarray:
        """Pixels for a stored patch, read back from its source file."""
        rec = self.store.get(patch_id)
        if not rec.source_path:
            raise DataError(f"patch {patch_id!r} has no source file on record")
        return load_image(rec.source_path)

    def cache_saliency(self, query_key: str, patch_id: str, png: bytes) -> None:
        with self._cache_lock:
            self._saliency_cache[(query_key, patch_id)] = png

    def cached_saliency(self, query_key: str, patch_id: str) -> bytes | None:
        with self._cache_lock:
            return self._saliency_cache.get((query_key, patch_id))


def _suggested_and_margin(result: RetrievalResult) -> tuple[int | None, float | None]:
    """Majority label over labelled neighbors; margin only for binary stores."""
    labelled = [n for n in result.neighbors if n.label is not None]
    if not labelled:
        return None, None
    voted = majority_vote_label(RetrievalResult(result.query_id, labelled),
                                k=len(labelled))
    labels = {n.label for n in labelled}
    if labels <= {0, 1}:
        benign = sum(1 for n in labelled if n.label == 0)
        malignant = len(labelled) - benign
        return voted, abs(benign - malignant) / len(result.neighbors)
    return voted, None


def handle_query(req: QueryRequest, state: AppState) -> QueryResponse:
    """Decode, embed, rank, vote; optionally render and cache saliency."""
    try:
        blob = base64.b64decode(req.image, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise DataError(f"image field is not valid base64: {exc}") from exc
    pixels = decode_image_bytes(blob)
    h, w, _ = state.network.config.input_shape
    if pixels.shape[:2] != (h, w):
        pixels = bilinear_resize(pixels, h, w)

    vector = state.network.embed(pixels)
    key = query_key_for(blob)
    result = query_top_k(state.store, vector, req.k, query_id=key)
    suggested, margin = _suggested_and_margin(result)

    neighbors = []
    for n in result.neighbors:
        out = NeighborOut(
            patch_id=n.patch_id,
            distance=float(n.distance),
            label=None if n.label is None else int(n.label),
            thumbnail_url=f"/api/patches/{n.patch_id}",
        )
        if req.include_saliency:
            try:
                ref = state.patch_pixels(n.patch_id)
            except DataError:
                ref = None  # patch has no readable source file; omit the overlay
            if ref is not None:
                if ref.shape[:2] != (h, w):
                    ref = bilinear_resize(ref, h, w)
                smap = grad_cam(state.network, pixels, ref,
                                query_id=key, neighbor_id=n.patch_id)
                png = encode_png(overlay(smap, pixels))
                state.cache_saliency(key, n.patch_id, png)
                out.saliency_url = f"/api/saliency/{key}/{n.patch_id}"
        neighbors.append(out)

    return QueryResponse(
        neighbors=neighbors,
        suggested_label=suggested,
        margin_score=margin,
        query_embedding=[float(v) for v in vector],
    )
