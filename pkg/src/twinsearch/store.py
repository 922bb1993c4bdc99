"""Embedding feature store with exact full-scan nearest-neighbour queries.

On-disk layout is JSON lines: one header object, then one object per record,
with fixed key order so identical stores serialize byte-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DimensionError


@dataclass
class EmbeddingRecord:
    patch_id: str
    label: int | None
    vector: np.ndarray
    source_path: str = ""


@dataclass
class Neighbor:
    patch_id: str
    label: int | None
    distance: float
    source_path: str = ""


@dataclass
class RetrievalResult:
    query_id: str
    neighbors: list[Neighbor]


def euclidean_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"vectors differ in shape: {a.shape} vs {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum()))


class FeatureStore:
    """Ordered collection of embedding records, unique by patch_id."""

    def __init__(self, dimension: int, checkpoint: str = ""):
        if dimension < 1:
            raise ConfigError(f"dimension must be >= 1, got {dimension}")
        self.dimension = dimension
        self.checkpoint = checkpoint
        self.records: list[EmbeddingRecord] = []
        self._by_id: dict[str, EmbeddingRecord] = {}

    def __len__(self) -> int:
        return len(self.records)

    def add(self, record: EmbeddingRecord) -> None:
        vector = np.asarray(record.vector, dtype=np.float64)
        if vector.shape != (self.dimension,):
            raise DimensionError(
                f"record {record.patch_id}: vector shape {vector.shape} does not "
                f"match store dimension {self.dimension}"
            )
        if record.patch_id in self._by_id:
            raise DataError(f"duplicate patch_id {record.patch_id!r}")
        record.vector = vector
        self.records.append(record)
        self._by_id[record.patch_id] = record

    def get(self, patch_id: str) -> EmbeddingRecord:
        rec = self._by_id.get(patch_id)
        if rec is None:
            raise DataError(f"unknown patch_id {patch_id!r}")
        return rec

    def __contains__(self, patch_id: str) -> bool:
        return patch_id in self._by_id

    def label_counts(self) -> dict:
        counts: dict = {}
        for rec in self.records:
            counts[rec.label] = counts.get(rec.label, 0) + 1
        return counts

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            header = {"dimension": self.dimension, "checkpoint": self.checkpoint,
                      "count": len(self.records)}
            fh.write(json.dumps(header, separators=(",", ":")) + "\n")
            for rec in self.records:
                row = {
                    "patch_id": rec.patch_id,
                    "label": None if rec.label is None else int(rec.label),
                    "vector": [float(v) for v in rec.vector],
                    "source_path": rec.source_path,
                }
                fh.write(json.dumps(row, separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path) -> "FeatureStore":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
        if not lines:
            raise DataError(f"empty store file {path}")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise DataError(f"store header is not valid JSON: {exc}") from exc
        for key in ("dimension", "checkpoint", "count"):
            if key not in header:
                raise DataError(f"store header missing {key!r}")
        store = cls(dimension=int(header["dimension"]), checkpoint=header["checkpoint"])
        for i, line in enumerate(lines[1:], start=2):
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"store line {i} is not valid JSON: {exc}") from exc
            store.add(EmbeddingRecord(
                patch_id=row["patch_id"],
                label=row["label"],
                vector=np.asarray(row["vector"], dtype=np.float64),
                source_path=row.get("source_path", ""),
            ))
        if len(store) != header["count"]:
            raise DataError(
                f"store header promises {header['count']} records, found {len(store)}"
            )
        return store


def query_top_k(store: FeatureStore, vector, k: int,
                exclude_id: str | None = None, query_id: str = "") -> RetrievalResult:
    """Exact nearest neighbours by Euclidean distance.

    Distance ties rank by patch_id so results are stable across runs. A k
    beyond the store size returns everything available.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (store.dimension,):
        raise DimensionError(
            f"query vector shape {vector.shape} does not match store dimension "
            f"{store.dimension}"
        )
    candidates = [r for r in store.records if r.patch_id != exclude_id]
    if not candidates:
        return RetrievalResult(query_id, [])
    matrix = np.stack([r.vector for r in candidates])
    dists = np.sqrt(((matrix - vector) ** 2).sum(axis=1))
    ranked = sorted(zip(dists, candidates), key=lambda t: (t[0], t[1].patch_id))
    neighbors = [
        Neighbor(r.patch_id, r.label, float(d), r.source_path)
        for d, r in ranked[:k]
    ]
    return RetrievalResult(query_id, neighbors)


def index_build(network, records, checkpoint: str = "") -> FeatureStore:
    """Embed every record through the network into a fresh store."""
    store = FeatureStore(dimension=network.embedding_dim, checkpoint=checkpoint)
    for rec in records:
        store.add(EmbeddingRecord(
            patch_id=rec.patch_id,
            label=rec.label,
            vector=network.embed(rec.pixels),
            source_path=getattr(rec, "source_path", ""),
        ))
    return store
