"""Contrastive pair training: loss, pair sampling, plain SGD with lr decay.

Pair targets: 0 means the two patches share a class (pull together), 1 means
they differ (push apart until squared distance reaches the margin).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DimensionError, NumericError
from .network import Network, NetworkConfig, build_network


@dataclass
class TrainConfig:
    margin: float = 0.9
    initial_lr: float = 0.01
    decay_steps: int = 10000
    decay_rate: float = 0.9
    batch_size: int = 16
    epochs: int = 300
    similar_fraction: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.margin <= 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")
        if self.initial_lr <= 0:
            raise ConfigError(f"initial_lr must be positive, got {self.initial_lr}")
        if self.decay_steps < 1:
            raise ConfigError(f"decay_steps must be >= 1, got {self.decay_steps}")
        if not 0.0 < self.decay_rate <= 1.0:
            raise ConfigError(f"decay_rate must be in (0, 1], got {self.decay_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 <= self.similar_fraction <= 1.0:
            raise ConfigError(f"similar_fraction must be in [0, 1], got {self.similar_fraction}")


def lr_at(step: int, config: TrainConfig) -> float:
    """Continuous exponential decay evaluated at an update counter."""
    return config.initial_lr * config.decay_rate ** (step / config.decay_steps)


def contrastive_loss(v1: np.ndarray, v2: np.ndarray, target: int, margin: float):
    """Hinge on squared distance.

    target 0: loss = d2, pulling the pair together.
    target 1: loss = max(0, margin - d2), pushing apart until d2 >= margin.
    Returns (loss, grad_v1, grad_v2).
    """
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    if v1.shape != v2.shape:
        raise ConfigError(f"pair embeddings differ in shape: {v1.shape} vs {v2.shape}")
    if target not in (0, 1):
        raise ConfigError(f"pair target must be 0 or 1, got {target!r}")
    if margin <= 0:
        raise ConfigError(f"margin must be positive, got {margin}")
    diff = v1 - v2
    d2 = float(diff @ diff)
    if target == 0:
        return d2, 2.0 * diff, -2.0 * diff
    if d2 < margin:
        return margin - d2, -2.0 * diff, 2.0 * diff
    return 0.0, np.zeros_like(diff), np.zeros_like(diff)


@dataclass
class PairBatch:
    first: list
    second: list
    targets: np.ndarray

    def __len__(self) -> int:
        return len(self.first)


def sample_pairs(records, batch_size: int, similar_fraction: float, rng, anchors=None) -> PairBatch:
    """Draw a batch of (anchor, partner, target) pairs.

    The first round(batch_size * similar_fraction) pairs are same-class, the
    remainder cross-class. A singleton class pairs an anchor with itself.
    """
    records = list(records)
    if any(r.label is None for r in records):
        raise DataError("pair sampling requires labelled records; found uncertain ones")
    by_label: dict[int, list] = {}
    for r in records:
        by_label.setdefault(r.label, []).append(r)
    if len(by_label) < 2:
        raise DataError(
            f"pair sampling needs at least two classes, got {sorted(by_label)}"
        )
    if anchors is None:
        anchors = [records[i] for i in rng.integers(0, len(records), size=batch_size)]
    elif len(anchors) != batch_size:
        raise ConfigError(f"got {len(anchors)} anchors for batch_size {batch_size}")

    n_similar = round(batch_size * similar_fraction)
    first, second, targets = [], [], []
    for i, anchor in enumerate(anchors):
        if i < n_similar:
            pool = [r for r in by_label[anchor.label] if r is not anchor]
            partner = anchor if not pool else pool[rng.integers(0, len(pool))]
            target = 0
        else:
            pool = [r for lbl, rs in by_label.items() if lbl != anchor.label for r in rs]
            partner = pool[rng.integers(0, len(pool))]
            target = 1
        first.append(anchor)
        second.append(partner)
        targets.append(target)
    return PairBatch(first, second, np.asarray(targets, dtype=np.int64))


@dataclass
class TrainReport:
    epochs: int
    steps: int
    loss_history: list[float] = field(default_factory=list)
    lr_history: list[float] = field(default_factory=list)


def train(records, net_config: NetworkConfig, train_config: TrainConfig,
          on_epoch=None, on_batch=None) -> tuple[Network, TrainReport]:
    """Fit a fresh network to the records with contrastive SGD.

    Each epoch walks a permutation of the records as anchors, chunked into
    batches (the trailing partial batch is kept). The batch loss is the sum
    over its pairs; reported epoch losses are per-pair means.
    """
    train_config.validate()
    network = build_network(net_config, seed=train_config.seed)
    rng = np.random.default_rng(train_config.seed)
    records = list(records)
    want = tuple(net_config.input_shape)
    for rec in records:
        if rec.pixels.shape != want:
            raise DimensionError(
                f"record {rec.patch_id} has shape {rec.pixels.shape}; "
                f"network expects {want}"
            )

    report = TrainReport(epochs=train_config.epochs, steps=0)
    step = 0
    for epoch in range(train_config.epochs):
        order = rng.permutation(len(records))
        epoch_loss = 0.0
        epoch_pairs = 0
        lr = lr_at(step, train_config)
        for start in range(0, len(order), train_config.batch_size):
            chunk = [records[i] for i in order[start : start + train_config.batch_size]]
            batch = sample_pairs(records, len(chunk), train_config.similar_fraction, rng,
                                 anchors=chunk)
            lr = lr_at(step, train_config)
            grad_sums = [np.zeros_like(p) for p in network.parameters()]
            batch_loss = 0.0
            for a, b, target in zip(batch.first, batch.second, batch.targets):
                v1, tape1 = network.forward(a.pixels, training=True, rng=rng)
                v2, tape2 = network.forward(b.pixels, training=True, rng=rng)
                loss, g1, g2 = contrastive_loss(v1, v2, int(target), train_config.margin)
                batch_loss += loss
                for acc, g in zip(grad_sums, network.backward(tape1, g1).grad_params):
                    acc += g
                for acc, g in zip(grad_sums, network.backward(tape2, g2).grad_params):
                    acc += g
            if not np.isfinite(batch_loss):
                raise NumericError(f"non-finite loss at step {step}")
            for p, g in zip(network.parameters(), grad_sums):
                p -= lr * g
            step += 1
            epoch_loss += batch_loss
            epoch_pairs += len(batch)
            if on_batch is not None:
                on_batch(step, batch_loss, lr, batch)
        mean_loss = epoch_loss / epoch_pairs
        report.loss_history.append(mean_loss)
        report.lr_history.append(lr)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss, lr, network)

    report.steps = step
    network.mode = "inference"
    return network, report
