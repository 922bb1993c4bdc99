"""Feature store behaviour and kNN exactness against a brute-force oracle."""

import numpy as np
import pytest

from twinsearch.errors import ConfigError, DataError, DimensionError
from twinsearch.store import (
    EmbeddingRecord,
    FeatureStore,
    euclidean_distance,
    query_top_k,
)


def brute_force_top_k(records, query, k, exclude_id=None):
    """Reference ranking: python loop, stable tie-break by patch_id."""
    scored = []
    for r in records:
        if r.patch_id == exclude_id:
            continue
        d = 0.0
        for a, b in zip(r.vector, query):
            d += (a - b) ** 2
        scored.append((d ** 0.5, r.patch_id))
    scored.sort()
    return [pid for _, pid in scored[:k]]


def make_store(n, dim=2, seed=0, labels=(0, 1)):
    rng = np.random.default_rng(seed)
    store = FeatureStore(dimension=dim, checkpoint="test.ckpt")
    for i in range(n):
        store.add(EmbeddingRecord(
            patch_id=f"p__{i:04d}",
            label=int(labels[i % len(labels)]),
            vector=rng.standard_normal(dim),
            source_path=f"patches/p{i:04d}.png",
        ))
    return store


class TestEuclideanDistance:
    def test_known_value(self):
        assert euclidean_distance([0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)

    def test_zero_for_identical(self):
        v = np.array([1.5, -2.5])
        assert euclidean_distance(v, v.copy()) == 0.0

    def test_shape_mismatch_raises(self):
        with pytest.raises(DimensionError):
            euclidean_distance([1.0], [1.0, 2.0])


class TestFeatureStore:
    def test_add_and_get(self):
        store = make_store(3)
        rec = store.get("p__0001")
        assert rec.label == 1
        assert len(store) == 3
        assert "p__0002" in store

    def test_duplicate_id_raises(self):
        store = make_store(2)
        with pytest.raises(DataError, match="duplicate"):
            store.add(EmbeddingRecord("p__0000", 0, np.zeros(2)))

    def test_wrong_dimension_raises(self):
        store = FeatureStore(dimension=2)
        with pytest.raises(DimensionError):
            store.add(EmbeddingRecord("x", 0, np.zeros(3)))

    def test_unknown_id_raises(self):
        with pytest.raises(DataError):
            make_store(1).get("missing")

    def test_label_counts(self):
        assert make_store(5).label_counts() == {0: 3, 1: 2}


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        store = make_store(10, seed=3)
        path = tmp_path / "store.jsonl"
        store.save(path)
        loaded = FeatureStore.load(path)
        assert loaded.dimension == store.dimension
        assert loaded.checkpoint == store.checkpoint
        assert len(loaded) == len(store)
        for a, b in zip(store.records, loaded.records):
            assert a.patch_id == b.patch_id
            assert a.label == b.label
            assert a.source_path == b.source_path
            np.testing.assert_array_equal(a.vector, b.vector)

    def test_two_saves_byte_identical(self, tmp_path):
        store = make_store(10, seed=4)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        store.save(p1)
        store.save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_first_line(self, tmp_path):
        import json
        store = make_store(4, seed=5)
        path = tmp_path / "store.jsonl"
        store.save(path)
        header = json.loads(path.read_text().splitlines()[0])
        assert header == {"dimension": 2, "checkpoint": "test.ckpt", "count": 4}

    def test_count_mismatch_rejected(self, tmp_path):
        store = make_store(4, seed=6)
        path = tmp_path / "store.jsonl"
        store.save(path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(DataError, match="promises"):
            FeatureStore.load(path)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "store.jsonl"
        path.write_text("not json at all\n")
        with pytest.raises(DataError):
            FeatureStore.load(path)


class TestQueryTopK:
    def test_matches_brute_force_oracle(self):
        store = make_store(200, seed=11)
        rng = np.random.default_rng(12)
        for _ in range(20):
            q = rng.standard_normal(2)
            for k in (1, 5, 10):
                got = [n.patch_id for n in query_top_k(store, q, k).neighbors]
                assert got == brute_force_top_k(store.records, q, k)

    def test_distances_are_sorted_and_correct(self):
        store = make_store(50, seed=13)
        q = np.array([0.2, -0.4])
        res = query_top_k(store, q, 10)
        dists = [n.distance for n in res.neighbors]
        assert dists == sorted(dists)
        for n in res.neighbors:
            assert n.distance == pytest.approx(
                euclidean_distance(store.get(n.patch_id).vector, q)
            )

    def test_tie_breaks_by_patch_id(self):
        store = FeatureStore(dimension=2)
        for pid in ("b", "a", "c"):
            store.add(EmbeddingRecord(pid, 0, np.array([1.0, 0.0])))
        res = query_top_k(store, np.zeros(2), 3)
        assert [n.patch_id for n in res.neighbors] == ["a", "b", "c"]

    def test_exclude_id_removes_self_match(self):
        store = make_store(5, seed=14)
        target = store.get("p__0002")
        res = query_top_k(store, target.vector, 5, exclude_id="p__0002")
        assert "p__0002" not in [n.patch_id for n in res.neighbors]
        assert len(res.neighbors) == 4

    def test_k_beyond_size_returns_all(self):
        store = make_store(3, seed=15)
        res = query_top_k(store, np.zeros(2), 99)
        assert len(res.neighbors) == 3

    def test_k_zero_raises(self):
        with pytest.raises(ConfigError):
            query_top_k(make_store(3), np.zeros(2), 0)

    def test_dimension_mismatch_raises(self):
        with pytest.raises(DimensionError):
            query_top_k(make_store(3), np.zeros(3), 1)

    def test_empty_store_returns_no_neighbors(self):
        store = FeatureStore(dimension=2)
        assert query_top_k(store, np.zeros(2), 5).neighbors == []
