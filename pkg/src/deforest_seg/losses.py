"""Training objective: weighted sum of binary cross-entropy and soft Dice."""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass(frozen=True)
class LossConfig:
    bce_weight: float = 0.5
    dice_weight: float = 0.5
    dice_smooth: float = 1.0
    prob_clip_epsilon: float = 1e-7

    def __post_init__(self):
        if self.bce_weight < 0 or self.dice_weight < 0 or self.bce_weight + self.dice_weight <= 0:
            raise ValueError("loss weights must be non-negative with a positive sum")
        if self.dice_smooth <= 0:
            raise ValueError(f"dice_smooth must be positive, got {self.dice_smooth}")


def _pair(pred, target):
    pred = torch.as_tensor(pred)
    if not pred.is_floating_point():
        pred = pred.double()
    target = torch.as_tensor(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {tuple(pred.shape)} does not match target {tuple(target.shape)}")
    return pred, target


def bce_loss(pred, target, eps: float = 1e-7) -> torch.Tensor:
    pred, target = _pair(pred, target)
    p = pred.clamp(eps, 1.0 - eps)
    return -(target * torch.log(p) + (1.0 - target) * torch.log1p(-p)).mean()


def dice_loss(pred, target, smooth: float = 1.0) -> torch.Tensor:
    """1 - (2 sum(p t) + s) / (sum(p) + sum(t) + s), on unthresholded probabilities."""
    pred, target = _pair(pred, target)
    inter = (pred * target).sum()
    return 1.0 - (2.0 * inter + smooth) / (pred.sum() + target.sum() + smooth)


def combined_loss(pred, target, config: LossConfig = LossConfig()) -> torch.Tensor:
    return config.bce_weight * bce_loss(pred, target, config.prob_clip_epsilon) + config.dice_weight * dice_loss(
        pred, target, config.dice_smooth
    )
