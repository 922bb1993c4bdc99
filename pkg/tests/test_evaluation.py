"""Scoring functions against hand-worked examples and recount oracles."""

from types import SimpleNamespace

import numpy as np
import pytest

from twinsearch.errors import ConfigError, DataError, ProtocolError
from twinsearch.evaluation import (
    load_retrieval_results,
    majority_vote_label,
    metrics_at_k,
    save_retrieval_results,
    top_k_accuracy,
    uncertain_query_report,
    uncertain_report_csv,
)
from twinsearch.store import EmbeddingRecord, FeatureStore, Neighbor, RetrievalResult


def result(query_id, labels, distances=None):
    """Build a RetrievalResult from ranked neighbour labels."""
    if distances is None:
        distances = [0.1 * (i + 1) for i in range(len(labels))]
    neighbors = [
        Neighbor(f"{query_id}_n{i}", label, d)
        for i, (label, d) in enumerate(zip(labels, distances))
    ]
    return RetrievalResult(query_id, neighbors)


class IdentityEmbedder:
    """Stand-in network whose embedding is the input vector itself."""

    embedding_dim = 2

    def embed(self, image):
        return np.asarray(image, dtype=np.float64)


class TestTopKAccuracy:
    def test_hand_case(self):
        results = [
            result("q0", [1, 0, 0]),  # truth 1: hit at k=1
            result("q1", [0, 1, 1]),  # truth 1: miss at k=1, hit at k=2
            result("q2", [0, 0, 0]),  # truth 1: never hits
        ]
        truths = [1, 1, 1]
        assert top_k_accuracy(results, truths, 1) == pytest.approx(1 / 3)
        assert top_k_accuracy(results, truths, 2) == pytest.approx(2 / 3)
        assert top_k_accuracy(results, truths, 3) == pytest.approx(2 / 3)

    def test_single_hit_anywhere_in_top_3_counts(self):
        assert top_k_accuracy([result("q", [0, 0, 1])], [1], 3) == 1.0

    def test_all_nearest_correct_gives_one(self):
        results = [result(f"q{i}", [i % 2]) for i in range(6)]
        truths = [i % 2 for i in range(6)]
        assert top_k_accuracy(results, truths, 1) == 1.0

    def test_matches_recount_oracle_and_non_decreasing(self):
        rng = np.random.default_rng(3)
        results, truths = [], []
        for i in range(200):
            labels = list(rng.integers(0, 2, size=10))
            results.append(result(f"q{i}", labels))
            truths.append(int(rng.integers(0, 2)))
        prev = 0.0
        for k in range(1, 11):
            got = top_k_accuracy(results, truths, k)
            want = sum(
                1 for r, t in zip(results, truths)
                if t in [n.label for n in r.neighbors[:k]]
            ) / len(results)
            assert got == pytest.approx(want)
            assert got >= prev
            prev = got

    def test_empty_query_set_raises(self):
        with pytest.raises(DataError):
            top_k_accuracy([], [], 1)

    def test_result_without_neighbors_raises(self):
        with pytest.raises(DataError):
            top_k_accuracy([RetrievalResult("q", [])], [0], 1)

    def test_bad_k_raises(self):
        with pytest.raises(ConfigError):
            top_k_accuracy([result("q", [0])], [0], 0)


class TestMajorityVote:
    def test_plain_majority(self):
        assert majority_vote_label(result("q", [1, 1, 0]), 3) == 1

    def test_k_one_is_nearest_neighbor(self):
        assert majority_vote_label(result("q", [0, 1, 1]), 1) == 0

    def test_even_tie_goes_to_nearest_tied_label(self):
        assert majority_vote_label(result("q", [0, 1, 0, 1]), 4) == 0
        assert majority_vote_label(result("q", [1, 0, 1, 0]), 4) == 1

    def test_vote_restricted_to_top_k(self):
        # full list favours 0, but the top-2 slice favours 1
        assert majority_vote_label(result("q", [1, 1, 0, 0, 0]), 2) == 1

    def test_empty_raises(self):
        with pytest.raises(DataError):
            majority_vote_label(RetrievalResult("q", []), 1)


class TestMetricsAtK:
    def test_hand_worked_binary_case(self):
        # majority votes produce predictions [1,1,0,0] for truths [1,0,0,0]:
        #   class 0: tp=2 fp=0 fn=1 -> p=1.0 r=2/3 f1=0.8
        #   class 1: tp=1 fp=1 fn=0 -> p=0.5 r=1.0 f1=2/3
        results = [
            result("q0", [1]),
            result("q1", [1]),
            result("q2", [0]),
            result("q3", [0]),
        ]
        report = metrics_at_k(results, [1, 0, 0, 0], 1)
        assert report.classes == [0, 1]
        np.testing.assert_array_equal(report.confusion_matrix, [[2, 1], [0, 1]])
        assert report.per_class_f1[0] == pytest.approx(0.8, abs=1e-9)
        assert report.per_class_f1[1] == pytest.approx(2 / 3, abs=1e-9)
        assert report.f1 == pytest.approx((0.8 + 2 / 3) / 2, abs=1e-9)
        assert report.precision == pytest.approx((1.0 + 0.5) / 2, abs=1e-9)
        assert report.recall == pytest.approx((2 / 3 + 1.0) / 2, abs=1e-9)

    def test_perfect_store_gives_identity_confusion(self):
        results = [result(f"q{i}", [i % 3] * 5) for i in range(9)]
        truths = [i % 3 for i in range(9)]
        report = metrics_at_k(results, truths, 5)
        np.testing.assert_array_equal(report.confusion_matrix, 3 * np.eye(3, dtype=int))
        assert report.precision == report.recall == report.f1 == 1.0
        assert report.top_k_accuracy == 1.0

    def test_confusion_counts_match_loop_oracle(self):
        rng = np.random.default_rng(8)
        results, truths = [], []
        for i in range(200):
            results.append(result(f"q{i}", list(rng.integers(0, 3, size=5))))
            truths.append(int(rng.integers(0, 3)))
        report = metrics_at_k(results, truths, 5)
        votes = [majority_vote_label(r, 5) for r in results]
        for i, c_true in enumerate(report.classes):
            for j, c_pred in enumerate(report.classes):
                want = sum(1 for t, p in zip(truths, votes) if t == c_true and p == c_pred)
                assert report.confusion_matrix[i, j] == want
        assert report.confusion_matrix.sum() == 200

    def test_at_k1_top_k_equals_vote_accuracy(self):
        rng = np.random.default_rng(9)
        results, truths = [], []
        for i in range(50):
            results.append(result(f"q{i}", list(rng.integers(0, 2, size=3))))
            truths.append(int(rng.integers(0, 2)))
        report = metrics_at_k(results, truths, 1)
        votes = [majority_vote_label(r, 1) for r in results]
        vote_acc = sum(1 for v, t in zip(votes, truths) if v == t) / len(truths)
        assert report.top_k_accuracy == pytest.approx(vote_acc)

    def test_unknown_voted_label_raises(self):
        with pytest.raises(DataError, match="not among"):
            metrics_at_k([result("q", [7])], [0], 1)

    def test_regenerates_from_persisted_results(self, tmp_path):
        rng = np.random.default_rng(10)
        results, truths = [], []
        for i in range(30):
            results.append(result(f"q{i}", list(rng.integers(0, 2, size=5))))
            truths.append(int(rng.integers(0, 2)))
        path = tmp_path / "results.jsonl"
        save_retrieval_results(results, truths, path)
        loaded_results, loaded_truths = load_retrieval_results(path)
        for k in (1, 5):
            a = metrics_at_k(results, truths, k)
            b = metrics_at_k(loaded_results, loaded_truths, k)
            assert a.top_k_accuracy == b.top_k_accuracy
            assert a.f1 == b.f1
            np.testing.assert_array_equal(a.confusion_matrix, b.confusion_matrix)


def binary_store(vectors_labels):
    store = FeatureStore(dimension=2)
    for i, (vec, label) in enumerate(vectors_labels):
        store.add(EmbeddingRecord(f"s__{i:03d}", label, np.asarray(vec, float)))
    return store


def query_patch(query_id, vector):
    return SimpleNamespace(patch_id=query_id, label=None, pixels=np.asarray(vector, float))


class TestUncertainQueryReport:
    def test_counts_sum_to_k_and_margin(self):
        # four benign near the origin, two malignant far away
        store = binary_store([
            ([0.0, 0.0], 0), ([0.1, 0.0], 0), ([0.0, 0.1], 0), ([0.1, 0.1], 0),
            ([5.0, 5.0], 1), ([5.1, 5.0], 1),
        ])
        report = uncertain_query_report(
            store, IdentityEmbedder(), [query_patch("q1", [0.05, 0.05])], k=5)
        row = report.rows[0]
        assert row.benign_count + row.malignant_count == 5
        assert row.benign_count == 4
        assert row.suggested_label == 0
        assert row.margin_score == pytest.approx(3 / 5)
        assert len(row.neighbors) == 5

    def test_unanimous_malignant_margin_is_one(self):
        store = binary_store([([0.0, 0.0], 1), ([0.1, 0.0], 1), ([0.2, 0.0], 1)])
        report = uncertain_query_report(
            store, IdentityEmbedder(), [query_patch("q", [0.0, 0.0])], k=3)
        assert report.rows[0].suggested_label == 1
        assert report.rows[0].margin_score == 1.0

    def test_three_two_split_margin(self):
        store = binary_store([
            ([0.0, 0.0], 1), ([0.1, 0.0], 1), ([0.2, 0.0], 1),
            ([0.3, 0.0], 0), ([0.4, 0.0], 0),
        ])
        report = uncertain_query_report(
            store, IdentityEmbedder(), [query_patch("q", [0.0, 0.0])], k=5)
        assert (report.rows[0].benign_count, report.rows[0].malignant_count) == (2, 3)
        assert report.rows[0].margin_score == pytest.approx(0.2)

    def test_non_binary_store_raises(self):
        store = binary_store([([0.0, 0.0], 0), ([1.0, 0.0], 2)])
        with pytest.raises(ProtocolError):
            uncertain_query_report(store, IdentityEmbedder(),
                                   [query_patch("q", [0.0, 0.0])], k=1)

    def test_store_smaller_than_k_raises(self):
        store = binary_store([([0.0, 0.0], 0), ([1.0, 0.0], 1)])
        with pytest.raises(DataError):
            uncertain_query_report(store, IdentityEmbedder(),
                                   [query_patch("q", [0.0, 0.0])], k=5)

    def test_csv_rendering(self):
        store = binary_store([([0.0, 0.0], 0), ([1.0, 0.0], 1)])
        report = uncertain_query_report(
            store, IdentityEmbedder(), [query_patch("q", [0.0, 0.0])], k=2)
        lines = uncertain_report_csv(report).strip().split("\n")
        assert lines[0] == "query_id,benign_count,malignant_count,suggested_label,margin_score"
        assert lines[1] == "q,1,1,0,0.000000"
