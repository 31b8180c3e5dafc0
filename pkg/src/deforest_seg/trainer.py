"""Mini-batch Adam training with per-epoch pixel-accuracy tracking."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .dataset import Sample, Sensor
from .losses import LossConfig, combined_loss
from .model import AttentionUNet, NonFiniteLossError, ShapeError, predict_batch, to_tensor
from .preprocess import augment as augment_sample

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 1e-4
    epochs: int = 50
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    augment: bool | None = None  # None: on for Landsat-8 only
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")

    def augment_for(self, sensor: Sensor) -> bool:
        return sensor is Sensor.LANDSAT8 if self.augment is None else self.augment


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float
    updates: int


class TrainHistory(list):
    """List of ``EpochRecord`` with line-delimited JSON persistence."""

    def write(self, path: str | Path) -> None:
        lines = [json.dumps(asdict(r)) for r in self]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "TrainHistory":
        text = Path(path).read_text(encoding="utf-8")
        return cls(EpochRecord(**json.loads(line)) for line in text.splitlines() if line.strip())

    @property
    def total_updates(self) -> int:
        return sum(r.updates for r in self)


def accuracy_from_probs(probs: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    """Pooled pixel accuracy of ``probs >= threshold`` against binary labels."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if probs.shape != labels.shape:
        raise ShapeError(f"probability shape {probs.shape} does not match labels {labels.shape}")
    return float(np.count_nonzero((probs >= threshold) == (labels == 1)) / labels.size)


def validate(model: AttentionUNet, samples: Sequence[Sample], batch_size: int = 16) -> float:
    if not samples:
        raise ValueError("validation set is empty")
    images = np.stack([s.image for s in samples])
    labels = np.stack([s.label for s in samples])
    return accuracy_from_probs(predict_batch(model, images, batch_size), labels)


def epoch_batches(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Seeded shuffle of ``range(n)`` cut into batches; the last partial batch is kept."""
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def sample_stream(samples: Sequence[Sample], config: TrainConfig, sensor: Sensor, epoch: int):
    """Yield the (possibly augmented) batches of one epoch in training order."""
    do_augment = config.augment_for(sensor)
    rng = np.random.default_rng([config.seed, epoch, 1])
    for idx in epoch_batches(len(samples), config.batch_size, config.seed, epoch):
        batch = [samples[i] for i in idx]
        if do_augment:
            batch = [augment_sample(s, rng) for s in batch]
        yield batch


def make_optimizer(model: AttentionUNet, config: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(
        model.parameters(),
        lr=config.learning_rate,
        betas=(config.adam_beta1, config.adam_beta2),
        eps=config.adam_epsilon,
    )


def train(
    model: AttentionUNet,
    train_set: Sequence[Sample],
    val_set: Sequence[Sample],
    config: TrainConfig,
    sensor: Sensor,
) -> tuple[AttentionUNet, TrainHistory]:
    """Run ``config.epochs`` full passes over ``train_set``; the last epoch's weights are kept."""
    if not train_set or not val_set:
        raise ValueError("training and validation sets must be non-empty")
    if model.config.in_channels != sensor.channels:
        raise ShapeError(f"model expects {model.config.in_channels} channels, {sensor.value} samples have {sensor.channels}")
    dtype = next(model.parameters()).dtype
    optimizer = make_optimizer(model, config)
    history = TrainHistory()
    for epoch in range(1, config.epochs + 1):
        model.train()
        losses = []
        for b, batch in enumerate(sample_stream(train_set, config, sensor, epoch)):
            x = to_tensor(np.stack([s.image for s in batch]), dtype)
            y = torch.from_numpy(np.stack([s.label for s in batch])[:, None]).to(dtype)
            optimizer.zero_grad(set_to_none=True)
            loss = combined_loss(model(x), y, config.loss)
            if not torch.isfinite(loss):
                raise NonFiniteLossError(f"non-finite loss at epoch {epoch}, batch {b} (first key {batch[0].key!r})")
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        record = EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            train_acc=validate(model, train_set, config.batch_size),
            val_acc=validate(model, val_set, config.batch_size),
            updates=len(losses),
        )
        if not all(math.isfinite(v) for v in (record.train_loss, record.train_acc, record.val_acc)):
            raise NonFiniteLossError(f"non-finite statistics at epoch {epoch}: {record}")
        log.info(
            "epoch %d/%d loss %.4f train_acc %.4f val_acc %.4f",
            epoch, config.epochs, record.train_loss, record.train_acc, record.val_acc,
        )
        history.append(record)
    return model, history
