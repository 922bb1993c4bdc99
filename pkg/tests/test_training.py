"""Contrastive loss values and gradients, pair sampling, and the SGD loop."""

from types import SimpleNamespace

import numpy as np
import pytest

from twinsearch.errors import ConfigError, DataError
from twinsearch.network import preset_config
from twinsearch.training import (
    PairBatch,
    TrainConfig,
    contrastive_loss,
    lr_at,
    sample_pairs,
    train,
)


def finite_diff_pair_grads(v1, v2, target, margin, eps=1e-6):
    """Central differences of the scalar loss in every embedding coordinate."""
    g1 = np.zeros_like(v1)
    g2 = np.zeros_like(v2)
    for vec, grad in ((v1, g1), (v2, g2)):
        for i in range(vec.size):
            orig = vec[i]
            vec[i] = orig + eps
            hi, _, _ = contrastive_loss(v1, v2, target, margin)
            vec[i] = orig - eps
            lo, _, _ = contrastive_loss(v1, v2, target, margin)
            vec[i] = orig
            grad[i] = (hi - lo) / (2 * eps)
    return g1, g2


class TestContrastiveLoss:
    def test_similar_identical_is_zero(self):
        v = np.array([0.3, -0.7])
        loss, g1, g2 = contrastive_loss(v, v.copy(), 0, 0.9)
        assert loss == 0.0
        np.testing.assert_array_equal(g1, np.zeros(2))
        np.testing.assert_array_equal(g2, np.zeros(2))

    def test_dissimilar_identical_pays_full_margin(self):
        v = np.array([1.0, 2.0])
        loss, _, _ = contrastive_loss(v, v.copy(), 1, 0.9)
        assert loss == pytest.approx(0.9, abs=1e-12)

    def test_dissimilar_beyond_margin_is_zero(self):
        loss, g1, g2 = contrastive_loss(np.array([0.0, 0.0]), np.array([1.0, 0.0]), 1, 0.9)
        assert loss == 0.0
        np.testing.assert_array_equal(g1, np.zeros(2))
        np.testing.assert_array_equal(g2, np.zeros(2))

    def test_similar_loss_equals_squared_distance(self):
        loss, _, _ = contrastive_loss(np.array([0.5, 0.0]), np.array([0.0, 0.0]), 0, 0.9)
        assert loss == pytest.approx(0.25, abs=1e-12)

    @pytest.mark.parametrize("target", [0, 1])
    def test_gradients_match_finite_differences(self, target):
        rng = np.random.default_rng(41)
        v1 = rng.standard_normal(4) * 0.3
        v2 = rng.standard_normal(4) * 0.3
        loss, g1, g2 = contrastive_loss(v1, v2, target, 0.9)
        n1, n2 = finite_diff_pair_grads(v1.copy(), v2.copy(), target, 0.9)
        np.testing.assert_allclose(g1, n1, atol=1e-8)
        np.testing.assert_allclose(g2, n2, atol=1e-8)

    def test_invalid_target_raises(self):
        with pytest.raises(ConfigError):
            contrastive_loss(np.zeros(2), np.zeros(2), 2, 0.9)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ConfigError):
            contrastive_loss(np.zeros(2), np.zeros(3), 0, 0.9)


class TestLrSchedule:
    def test_starts_at_initial(self):
        assert lr_at(0, TrainConfig()) == pytest.approx(0.01)

    def test_one_decay_period(self):
        assert lr_at(10000, TrainConfig()) == pytest.approx(0.009)

    def test_decay_is_continuous_not_staircase(self):
        cfg = TrainConfig()
        assert lr_at(5000, cfg) == pytest.approx(0.01 * 0.9 ** 0.5)
        assert lr_at(1, cfg) < lr_at(0, cfg)


def make_records(n_per_class, labels=(0, 1), side=4, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for label in labels:
        for i in range(n_per_class):
            out.append(SimpleNamespace(
                patch_id=f"c{label}__{i:03d}",
                label=label,
                pixels=rng.random((side, side, 3)),
            ))
    return out


class TestSamplePairs:
    def test_counts_and_target_coding(self):
        records = make_records(6)
        rng = np.random.default_rng(1)
        batch = sample_pairs(records, 10, 0.5, rng)
        assert len(batch) == 10
        assert batch.targets.sum() == 5
        for a, b, t in zip(batch.first, batch.second, batch.targets):
            assert (a.label == b.label) == (t == 0)

    def test_similar_fraction_rounding(self):
        records = make_records(6)
        batch = sample_pairs(records, 5, 0.5, np.random.default_rng(2))
        # round(2.5) banker's-rounds to 2 similar pairs
        assert (batch.targets == 0).sum() == 2

    def test_single_class_raises(self):
        records = make_records(6, labels=(0,))
        with pytest.raises(DataError, match="two classes"):
            sample_pairs(records, 4, 0.5, np.random.default_rng(3))

    def test_unlabelled_record_raises(self):
        records = make_records(3)
        records.append(SimpleNamespace(patch_id="uncertain__000", label=None, pixels=None))
        with pytest.raises(DataError, match="uncertain"):
            sample_pairs(records, 4, 0.5, np.random.default_rng(4))

    def test_explicit_anchors_are_kept_in_order(self):
        records = make_records(4)
        anchors = records[:3]
        batch = sample_pairs(records, 3, 0.0, np.random.default_rng(5), anchors=anchors)
        assert batch.first == anchors
        assert (batch.targets == 1).all()

    def test_singleton_class_pairs_with_itself(self):
        records = make_records(1)
        batch = sample_pairs(records, 2, 1.0, np.random.default_rng(6))
        for a, b in zip(batch.first, batch.second):
            assert a is b


class TestTrainLoop:
    def _tiny_setup(self, epochs=2, seed=0):
        net_cfg = preset_config("desk", input_shape=(16, 16, 3))
        train_cfg = TrainConfig(epochs=epochs, batch_size=4, seed=seed)
        records = make_records(4, side=16, seed=7)
        return records, net_cfg, train_cfg

    def test_history_lengths_and_finite_losses(self):
        records, net_cfg, train_cfg = self._tiny_setup(epochs=3)
        net, report = train(records, net_cfg, train_cfg)
        assert report.epochs == 3
        assert len(report.loss_history) == 3
        assert len(report.lr_history) == 3
        assert all(np.isfinite(v) for v in report.loss_history)
        assert net.mode == "inference"
        # 8 records / batch 4 -> 2 updates per epoch
        assert report.steps == 6

    def test_same_seed_reproduces_parameters(self):
        records, net_cfg, train_cfg = self._tiny_setup(epochs=2, seed=9)
        net_a, _ = train(records, net_cfg, train_cfg)
        net_b, _ = train(records, net_cfg, TrainConfig(epochs=2, batch_size=4, seed=9))
        for pa, pb in zip(net_a.parameters(), net_b.parameters()):
            np.testing.assert_array_equal(pa, pb)

    def test_zero_epochs_returns_fresh_network(self):
        records, net_cfg, train_cfg = self._tiny_setup(epochs=0)
        net, report = train(records, net_cfg, train_cfg)
        assert report.loss_history == []
        assert report.steps == 0
        assert net.mode == "inference"

    def test_callbacks_fire(self):
        records, net_cfg, train_cfg = self._tiny_setup(epochs=2)
        seen_batches, seen_epochs = [], []
        train(records, net_cfg, train_cfg,
              on_epoch=lambda e, loss, lr, net: seen_epochs.append((e, loss, lr)),
              on_batch=lambda s, loss, lr, batch: seen_batches.append(s))
        assert [e for e, _, _ in seen_epochs] == [0, 1]
        assert seen_batches == [1, 2, 3, 4]

    def test_partial_trailing_batch_is_trained(self):
        net_cfg = preset_config("desk", input_shape=(16, 16, 3))
        records = make_records(3, side=16)  # 6 records, batch 4 -> batches of 4 and 2
        _, report = train(records, net_cfg, TrainConfig(epochs=1, batch_size=4, seed=1))
        assert report.steps == 2

    def test_training_moves_parameters(self):
        records, net_cfg, train_cfg = self._tiny_setup(epochs=1)
        from twinsearch.network import build_network
        fresh = build_network(net_cfg, seed=train_cfg.seed)
        trained, _ = train(records, net_cfg, train_cfg)
        assert any(
            not np.array_equal(a, b)
            for a, b in zip(fresh.parameters(), trained.parameters())
        )
